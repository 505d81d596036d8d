#pragma once

// Shared helpers for the test suites: seeded random values, an independent
// finite-difference oracle for gradients, and the synthetic dataset
// generators used by the training and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embsteer/adaptive.hpp"
#include "embsteer/dataset.hpp"
#include "embsteer/matrix.hpp"
#include "embsteer/rng.hpp"
#include "embsteer/training.hpp"

namespace embsteer::testing {

inline double rel_err(double actual, double expected) {
    const double denom = std::max({std::fabs(actual), std::fabs(expected), 1e-12});
    return std::fabs(actual - expected) / denom;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, SplitMix64& rng, double lo = -1.0,
                            double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, SplitMix64& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline PairDataset random_dataset(std::size_t n, std::size_t d, std::size_t l, SplitMix64& rng) {
    PairDataset ds;
    ds.d = d;
    ds.l = l;
    for (std::size_t i = 0; i < n; ++i)
        ds.pairs.push_back({random_matrix(d, l, rng), random_matrix(d, l, rng)});
    return ds;
}

// Brute-force mean difference: pair-major loop order with Kahan-compensated
// long double accumulation, deliberately unlike compute_direction.
inline Matrix direction_oracle(const PairDataset& ds) {
    std::vector<long double> sum(ds.d * ds.l, 0.0L);
    std::vector<long double> carry(ds.d * ds.l, 0.0L);
    for (const auto& pair : ds.pairs) {
        for (std::size_t e = 0; e < sum.size(); ++e) {
            const long double term =
                static_cast<long double>(pair.biased.data()[e]) - pair.neutral.data()[e];
            const long double y = term - carry[e];
            const long double t = sum[e] + y;
            carry[e] = (t - sum[e]) - y;
            sum[e] = t;
        }
    }
    Matrix out(ds.d, ds.l);
    for (std::size_t e = 0; e < sum.size(); ++e)
        out.data()[e] = static_cast<double>(sum[e] / static_cast<long double>(ds.size()));
    return out;
}

// Central finite differences of the training loss w.r.t. every parameter,
// evaluated through the public forward path only.
inline ModuleGrads fd_loss_gradients(const AdaptiveModule& module, const PairDataset& ds,
                                     const Matrix& dir, double h = 1e-5) {
    ModuleGrads grads = zeros_like(module);
    AdaptiveModule probe = module;

    std::vector<std::span<double>> probe_tensors;
    for_each_tensor(probe, [&](std::span<double> t) { probe_tensors.push_back(t); });
    std::vector<std::span<double>> grad_tensors;
    for_each_tensor(grads, [&](std::span<double> t) { grad_tensors.push_back(t); });

    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        for (std::size_t i = 0; i < probe_tensors[t].size(); ++i) {
            const double saved = probe_tensors[t][i];
            probe_tensors[t][i] = saved + h;
            const double up = loss(probe, ds, dir);
            probe_tensors[t][i] = saved - h;
            const double down = loss(probe, ds, dir);
            probe_tensors[t][i] = saved;
            grad_tensors[t][i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

inline double max_grad_rel_err(const ModuleGrads& analytic, const ModuleGrads& numeric) {
    std::vector<double> a, b;
    for_each_tensor(analytic, [&](std::span<const double> t) {
        a.insert(a.end(), t.begin(), t.end());
    });
    for_each_tensor(numeric, [&](std::span<const double> t) {
        b.insert(b.end(), t.begin(), t.end());
    });
    double scale = 1.0;
    for (double v : a) scale = std::max(scale, std::fabs(v));
    // Central differences bottom out around 1e-10 absolute at h=1e-5, so
    // entries that tiny (relative to the gradient's scale) count as matching.
    const double abs_floor = 1e-9 * scale;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::fabs(a[i] - b[i]) <= abs_floor) continue;
        const double denom = std::max(std::fabs(a[i]), std::fabs(b[i]));
        worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
    }
    return worst;
}

// True when every hidden pre-activation across the dataset keeps a safe
// distance from the ReLU kink, so central differences with step h stay on
// one side of it. Gradient tests resample configs until this holds.
inline bool relu_inputs_clear(const AdaptiveModule& module, const PairDataset& ds,
                              double margin = 1e-3) {
    for (const auto& pair : ds.pairs) {
        auto check_branch = [&](const AttentionBranch& branch,
                                const std::vector<double>& pooled) {
            for (double z : affine_forward(branch.squeeze, pooled))
                if (std::fabs(z) < margin) return false;
            return true;
        };
        if (module.token &&
            !check_branch(*module.token, pool_over_embedding(pair.neutral)))
            return false;
        if (module.embedding &&
            !check_branch(*module.embedding, pool_over_tokens(pair.neutral)))
            return false;
    }
    return true;
}

// A dataset whose pair offsets were produced by an actual module of the
// target class ("teacher"), so a student trained from the same init seed can
// represent them exactly:
//   biased_i = neutral_i + attention_teacher(neutral_i) (x) direction
// The teacher shares the student's seeded squeeze weights and differs only in
// its excite layers, drawn at the given scales from a separate stream.
struct SyntheticSpec {
    std::size_t n = 200;
    std::size_t d = 64;
    std::size_t l = 16;
    std::size_t r = 4;
    AdaptMode mode = AdaptMode::both;
    std::uint64_t seed = 0;
    double excite_weight_scale = 0.02;
    double excite_bias_scale = 0.03;
    double direction_scale = 1.0;
    double input_offset_scale = 0.0;  // per-pair shift; spreads the pooled summaries
};

struct Synthetic {
    PairDataset ds;
    Matrix direction;  // the direction the offsets were built from
    AdaptiveModule teacher;
};

inline Synthetic make_synthetic(const SyntheticSpec& spec) {
    AdaptiveModule teacher = init_module(spec.d, spec.l, spec.mode, spec.r, spec.seed);
    SplitMix64 rng(spec.seed ^ 0x5E1EC7EDDA7A5E7ULL);
    for_each_branch(teacher, [&](AttentionBranch& branch) {
        for (double& w : branch.excite.weight.data())
            w = rng.uniform(-spec.excite_weight_scale, spec.excite_weight_scale);
        for (double& b : branch.excite.bias)
            b = rng.uniform(-spec.excite_bias_scale, spec.excite_bias_scale);
    });

    Matrix direction = quantize_f32(
        spec.direction_scale *
        random_matrix(spec.d, spec.l, rng));

    PairDataset ds;
    ds.d = spec.d;
    ds.l = spec.l;
    for (std::size_t i = 0; i < spec.n; ++i) {
        Matrix neutral = random_matrix(spec.d, spec.l, rng);
        if (spec.input_offset_scale != 0.0) {
            const double shift = rng.uniform(-spec.input_offset_scale, spec.input_offset_scale);
            for (double& v : neutral.data()) v += shift;
        }
        neutral = quantize_f32(neutral);
        const Matrix offset = adapt_direction(teacher, neutral, direction);
        ds.pairs.push_back({neutral, quantize_f32(neutral + offset)});
    }
    ds.meta = {{"bias", "synthetic"}, {"encoder", "synthetic-teacher"},
               {"created", "2000-01-01T00:00:00Z"}};
    return Synthetic{std::move(ds), std::move(direction), std::move(teacher)};
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("embsteer_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace embsteer::testing
