#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpssm {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// One function per acceptance criterion. Each pins its own tolerances.
CheckResult check_jacobian_exactness(uint64_t seed);        // 1
CheckResult check_spectrum_lemma(uint64_t seed);            // 2
CheckResult check_three_way_equivalence(uint64_t seed);     // 3
CheckResult check_global_bound(uint64_t seed);              // 4
CheckResult check_min_bound_deep_regime(uint64_t seed);     // 5
CheckResult check_vanishing_rate(uint64_t seed);            // 6
CheckResult check_gradient_correctness(uint64_t seed);      // 7
CheckResult check_training_directional(uint64_t seed);      // 8
CheckResult check_runtime_profile(uint64_t seed);           // 9
CheckResult check_locality_equivariance(uint64_t seed);     // 10

struct BenchRow {
    int k = 0;
    double sequential_ms = 0.0;
    double fast_ms = 0.0;
    double max_output_dev = 0.0;
};

/// Median wall times (over `reps` runs after 2 warmups) of the sequential
/// recurrence versus the diagonalized fast path on one random connected
/// graph, sharing the same converted parameters per k.
std::vector<BenchRow> bench_runtime(int n, int channels, const std::vector<int>& k_list,
                                    int reps, uint64_t seed);

/// Formats one pass/fail line.
std::string format_check(const CheckResult& r);

}  // namespace mpssm
