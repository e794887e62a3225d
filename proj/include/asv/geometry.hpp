#pragma once

namespace asv {

/// floor((n + 2p - k)/s) + 1, or a non-positive value when the window does not fit.
constexpr int window_out_extent(int n, int k, int s, int p) {
  const int span = n + 2 * p - k;
  if (span < 0) return 0;
  return span / s + 1;
}

}  // namespace asv
