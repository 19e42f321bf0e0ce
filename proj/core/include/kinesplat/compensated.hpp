// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

namespace kinesplat {

// Neumaier-compensated accumulator. A plain running sum carries a rounding
// error that grows with the number of terms and reshuffles whenever any term
// changes, which puts a length-dependent noise floor under every reduction.
// This keeps the result within one rounding of the exact sum regardless of
// length, so a reduction moves only with the terms that actually changed --
// which is what lets central differences of the losses resolve gradients all
// the way down to the representation floor.
struct CompensatedSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }

  double result() const { return sum + carry; }
};

}  // namespace kinesplat
