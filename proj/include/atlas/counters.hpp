#pragma once

#include <cstdint>

namespace atlas {

// Deterministic operation counters. Counting never changes arithmetic: the
// same loops run whether or not a counter is attached, so counted and
// uncounted runs are bitwise identical.
struct OpCounter {
    std::uint64_t macs = 0;          // multiply-accumulate ops in matmuls/projections
    std::uint64_t attn_pairs = 0;    // query-key pairs scored in attention
    std::uint64_t attn_queries = 0;  // query tokens processed by attention ops
    std::uint64_t proj_calls = 0;    // Q/K/V/O projection invocations (per window per role)
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;

    OpCounter& operator+=(const OpCounter& o) {
        macs += o.macs;
        attn_pairs += o.attn_pairs;
        attn_queries += o.attn_queries;
        proj_calls += o.proj_calls;
        cache_hits += o.cache_hits;
        cache_misses += o.cache_misses;
        return *this;
    }
};

}  // namespace atlas
