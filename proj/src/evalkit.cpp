#include "embsteer/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "embsteer/errors.hpp"
#include "embsteer/injector.hpp"
#include "embsteer/io.hpp"

namespace embsteer {

namespace {

double flat_cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;  // degenerate pair, treat as unchanged
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

class RunningSummary {
public:
    void add(double v) {
        sum_ += v;
        sum_sq_ += v * v;
        min_ = std::min(min_, v);
        max_ = std::max(max_, v);
        ++count_;
    }

    AttentionSummary finish() const {
        AttentionSummary s;
        if (count_ == 0) return s;
        s.mean = sum_ / static_cast<double>(count_);
        const double var =
            std::max(0.0, sum_sq_ / static_cast<double>(count_) - s.mean * s.mean);
        s.stddev = std::sqrt(var);
        s.min = min_;
        s.max = max_;
        return s;
    }

    bool empty() const noexcept { return count_ == 0; }

private:
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    double min_ = std::numeric_limits<double>::infinity();
    double max_ = -std::numeric_limits<double>::infinity();
    std::size_t count_ = 0;
};

nlohmann::json summary_json(const AttentionSummary& s) {
    return nlohmann::json{{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}};
}

AttentionSummary summary_from_json(const nlohmann::json& j) {
    AttentionSummary s;
    s.mean = j.at("mean").get<double>();
    s.stddev = j.at("std").get<double>();
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    return s;
}

}  // namespace

EvalReport evaluate(const AdaptiveModule& module, const Matrix& dir, const PairDataset& ds) {
    ds.validate();
    if (module.d != ds.d || module.l != ds.l)
        throw DimensionError("module dims do not match dataset");
    if (dir.rows() != ds.d || dir.cols() != ds.l)
        throw DimensionError("direction shape " + shape_string(dir) + " does not match dataset");

    EvalReport report;
    report.n = ds.size();
    report.mode = module.mode;
    report.dataset_digest = digest_hex(payload_digest(ds));
    report.direction_digest = digest_hex(payload_digest(quantize_f32(dir)));
    report.module_digest = digest_hex(payload_digest(module));

    RunningSummary token_summary, embedding_summary, all_summary;
    std::vector<double> token_cosine_sums(ds.l, 0.0);

    for (const auto& pair : ds.pairs) {
        const Matrix& user = pair.neutral;
        const Matrix adapted = adapt_direction(module, user, dir);
        const Matrix injected = user + adapted;

        double adaptive_acc = 0.0;
        double fixed_acc = 0.0;
        for (std::size_t e = 0; e < adapted.size(); ++e) {
            const double diff = pair.biased.data()[e] - user.data()[e];
            const double ra = diff - adapted.data()[e];
            const double rf = diff - dir.data()[e];
            adaptive_acc += ra * ra;
            fixed_acc += rf * rf;
        }
        report.adaptive_residuals.push_back(adaptive_acc);
        report.fixed_residuals.push_back(fixed_acc);
        report.cosines.push_back(flat_cosine(user.data(), injected.data()));

        for (std::size_t l = 0; l < ds.l; ++l) {
            double dot = 0.0, nu = 0.0, ni = 0.0;
            for (std::size_t d = 0; d < ds.d; ++d) {
                dot += user(d, l) * injected(d, l);
                nu += user(d, l) * user(d, l);
                ni += injected(d, l) * injected(d, l);
            }
            token_cosine_sums[l] +=
                (nu == 0.0 || ni == 0.0) ? 1.0
                                         : std::clamp(dot / (std::sqrt(nu) * std::sqrt(ni)),
                                                      -1.0, 1.0);
        }

        const AttentionMaps maps = attention(module, user);
        if (maps.token)
            for (double a : *maps.token) {
                token_summary.add(a);
                all_summary.add(a);
            }
        if (maps.embedding)
            for (double a : *maps.embedding) {
                embedding_summary.add(a);
                all_summary.add(a);
            }
    }

    double adaptive_sum = 0.0, fixed_sum = 0.0, cosine_sum = 0.0;
    for (double v : report.adaptive_residuals) adaptive_sum += v;
    for (double v : report.fixed_residuals) fixed_sum += v;
    for (double v : report.cosines) cosine_sum += v;
    const double inv_n = 1.0 / static_cast<double>(report.n);
    report.adaptive_residual_mean = adaptive_sum * inv_n;
    report.fixed_residual_mean = fixed_sum * inv_n;
    report.cosine_mean = cosine_sum * inv_n;

    report.per_token_cosine_mean.resize(ds.l);
    for (std::size_t l = 0; l < ds.l; ++l)
        report.per_token_cosine_mean[l] = token_cosine_sums[l] * inv_n;

    if (!token_summary.empty()) report.attention_token = token_summary.finish();
    if (!embedding_summary.empty()) report.attention_embedding = embedding_summary.finish();
    report.attention_all = all_summary.finish();
    return report;
}

std::pair<EvalReport, EvalReport> transfer_report(const AdaptiveModule& module, const Matrix& dir,
                                                  const PairDataset& source,
                                                  const PairDataset& target) {
    if (source.d != target.d || source.l != target.l)
        throw DimensionError("source and target datasets have different dims");
    return {evaluate(module, dir, source), evaluate(module, dir, target)};
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j{{"n", n},
                     {"mode", to_string(mode)},
                     {"dataset_digest", dataset_digest},
                     {"direction_digest", direction_digest},
                     {"module_digest", module_digest},
                     {"adaptive_residuals", adaptive_residuals},
                     {"fixed_residuals", fixed_residuals},
                     {"adaptive_residual_mean", adaptive_residual_mean},
                     {"fixed_residual_mean", fixed_residual_mean},
                     {"cosines", cosines},
                     {"cosine_mean", cosine_mean},
                     {"per_token_cosine_mean", per_token_cosine_mean},
                     {"attention", summary_json(attention_all)}};
    if (attention_token) j["attention_token"] = summary_json(*attention_token);
    if (attention_embedding) j["attention_embedding"] = summary_json(*attention_embedding);
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.n = j.at("n").get<std::size_t>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.direction_digest = j.at("direction_digest").get<std::string>();
    r.module_digest = j.value("module_digest", "");
    r.adaptive_residuals = j.at("adaptive_residuals").get<std::vector<double>>();
    r.fixed_residuals = j.at("fixed_residuals").get<std::vector<double>>();
    r.adaptive_residual_mean = j.at("adaptive_residual_mean").get<double>();
    r.fixed_residual_mean = j.at("fixed_residual_mean").get<double>();
    r.cosines = j.at("cosines").get<std::vector<double>>();
    r.cosine_mean = j.at("cosine_mean").get<double>();
    r.per_token_cosine_mean = j.at("per_token_cosine_mean").get<std::vector<double>>();
    r.attention_all = summary_from_json(j.at("attention"));
    if (j.contains("attention_token")) r.attention_token = summary_from_json(j["attention_token"]);
    if (j.contains("attention_embedding"))
        r.attention_embedding = summary_from_json(j["attention_embedding"]);
    return r;
}

}  // namespace embsteer
