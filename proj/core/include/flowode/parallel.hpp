// Copyright (c) 2026 flowode contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace flowode {

/// Effective worker count: explicit override if set, else FLOWODE_THREADS,
/// else hardware concurrency.
int thread_count();

/// Override the worker count for this process (0 restores automatic choice).
void set_thread_count(int n);

/// Runs fn(begin, end) over a static contiguous partition of [0, n).
/// The partition depends only on n and the worker count; callers must write
/// to disjoint slots so that results are independent of the split.
void parallel_for(std::int64_t n,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace flowode
