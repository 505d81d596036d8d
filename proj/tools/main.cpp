// embsteer: command-line front end for the embedding bias toolkit.
//
// Subcommands mirror the pipeline stages: instruct -> ingest -> direction ->
// train -> inject / eval, plus inspect for poking at the binary formats.
// Errors exit with one code per category so scripts can branch on failures.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "embsteer/direction.hpp"
#include "embsteer/encoder.hpp"
#include "embsteer/errors.hpp"
#include "embsteer/evalkit.hpp"
#include "embsteer/injector.hpp"
#include "embsteer/io.hpp"
#include "embsteer/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(embsteer::ErrorCategory category) {
    switch (category) {
        case embsteer::ErrorCategory::usage: return 2;
        case embsteer::ErrorCategory::format: return 3;
        case embsteer::ErrorCategory::dimension: return 4;
        case embsteer::ErrorCategory::provider: return 5;
        case embsteer::ErrorCategory::divergence: return 6;
        case embsteer::ErrorCategory::io: return 7;
        case embsteer::ErrorCategory::internal: return 1;
    }
    return 1;
}

void print_error(embsteer::ErrorCategory category, const std::string& message,
                 const char* code = nullptr) {
    json j{{"category", embsteer::to_string(category)}, {"message", message}};
    if (code) j["code"] = code;
    std::cerr << j.dump() << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw embsteer::IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw embsteer::IoError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Values from --config seed the variables before CLI11 parses the real
// flags, so anything given on the command line wins.
using ConfigSetters = std::map<std::string, std::function<void(const json&)>>;

json load_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in)
                throw embsteer::IoError(std::string("cannot open config ") + argv[i + 1]);
            try {
                json cfg;
                in >> cfg;
                return cfg;
            } catch (const json::exception& e) {
                throw embsteer::UsageError("config file is not valid JSON: " +
                                           std::string(e.what()));
            }
        }
    }
    return json::object();
}

// A config file holds either flat keys ({"epochs": 80}) or per-subcommand
// sections ({"train": {"epochs": 80}}). Section keys are checked strictly;
// flat keys may belong to any subcommand, so unknown ones are skipped.
void apply_config(const json& cfg, const std::string& command, const ConfigSetters& setters) {
    const bool sectioned = cfg.contains(command) && cfg[command].is_object();
    const json& scope = sectioned ? cfg[command] : cfg;
    for (const auto& [key, value] : scope.items()) {
        if (!sectioned && value.is_object()) continue;  // another subcommand's section
        auto setter = setters.find(key);
        if (setter == setters.end()) {
            if (!sectioned) continue;
            throw embsteer::UsageError("unknown key '" + key + "' in config section '" +
                                       command + "'");
        }
        try {
            setter->second(value);
        } catch (const json::exception& e) {
            throw embsteer::UsageError("bad config value for '" + key +
                                       "': " + std::string(e.what()));
        }
    }
}

void require_value(const std::string& value, const char* flag) {
    if (value.empty())
        throw embsteer::UsageError(std::string(flag) + " is required (flag or config file)");
}

std::unique_ptr<embsteer::EncoderProvider> make_provider(const std::string& kind,
                                                         const std::string& manifest,
                                                         const std::string& endpoint) {
    if (kind == "file") {
        if (manifest.empty()) throw embsteer::UsageError("file provider needs --manifest");
        return std::make_unique<embsteer::FileProvider>(
            embsteer::FileProvider::from_manifest(manifest));
    }
    if (kind == "http") {
        if (endpoint.empty()) throw embsteer::UsageError("http provider needs --endpoint");
        return std::make_unique<embsteer::HttpProvider>(endpoint);
    }
    throw embsteer::UsageError("unknown provider '" + kind + "' (expected file|http)");
}

struct CommonTrainFlags {
    std::string mode = "both";
    std::size_t r = 4;
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"embedding bias direction + adaptive injection toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; explicit flags win");

    json cfg;
    try {
        cfg = load_config(argc, argv);
    } catch (const embsteer::Error& e) {
        print_error(e.category(), e.what());
        return exit_code(e.category());
    }

    // instruct
    auto* instruct = app.add_subcommand("instruct", "emit the LLM prompt-generation instruction");
    std::string bias_description;
    std::size_t instruct_count = 200;
    std::string instruct_out;
    instruct->add_option("--bias", bias_description, "bias description to embed");
    instruct->add_option("--count", instruct_count, "number of prompt pairs to request");
    instruct->add_option("--out", instruct_out, "write to file instead of stdout");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "encode paired prompt lists into a dataset");
    std::string neutral_path, biased_path, provider_kind = "file", manifest_path, endpoint;
    std::string ingest_bias_label, ingest_out;
    std::optional<std::size_t> ingest_subsample;
    std::uint64_t ingest_seed = 0;
    ingest->add_option("--neutral", neutral_path, "neutral prompts, one per line");
    ingest->add_option("--biased", biased_path, "biased prompts, one per line");
    ingest->add_option("--provider", provider_kind, "encoder provider: file|http");
    ingest->add_option("--manifest", manifest_path, "prompt -> embedding manifest (file provider)");
    ingest->add_option("--endpoint", endpoint, "encoder base URL (http provider)");
    ingest->add_option("--bias-label", ingest_bias_label, "bias label stored in meta");
    ingest->add_option("--subsample", ingest_subsample, "keep K seeded-shuffled pairs");
    ingest->add_option("--seed", ingest_seed, "seed for --subsample");
    ingest->add_option("--out", ingest_out, "output dataset (EBPD)");

    // direction
    auto* direction = app.add_subcommand("direction", "compute the mean bias direction");
    std::string dir_dataset, dir_out, dir_stats_out;
    std::optional<std::size_t> dir_subsample;
    std::uint64_t dir_seed = 0;
    direction->add_option("--dataset", dir_dataset, "input dataset (EBPD)");
    direction->add_option("--out", dir_out, "output direction (BDIR)");
    direction->add_option("--stats", dir_stats_out, "also write residual stats JSON here");
    direction->add_option("--subsample", dir_subsample, "keep K seeded-shuffled pairs");
    direction->add_option("--seed", dir_seed, "seed for --subsample");

    // train
    auto* train_cmd = app.add_subcommand("train", "fit the adaptive module");
    std::string train_dataset, train_direction, train_out, train_report_out;
    std::optional<std::size_t> train_subsample;
    CommonTrainFlags tf;
    train_cmd->add_option("--dataset", train_dataset, "training dataset (EBPD)");
    train_cmd->add_option("--direction", train_direction, "bias direction (BDIR)");
    train_cmd->add_option("--mode", tf.mode, "token|embedding|both");
    train_cmd->add_option("--r", tf.r, "bottleneck reduction ratio");
    train_cmd->add_option("--epochs", tf.epochs, "training epochs");
    train_cmd->add_option("--lr", tf.lr, "Adam learning rate");
    train_cmd->add_option("--seed", tf.seed, "init + subsample seed");
    train_cmd->add_option("--subsample", train_subsample, "train on K seeded-shuffled pairs");
    train_cmd->add_option("--out", train_out, "output checkpoint (ABCM)");
    train_cmd->add_option("--report", train_report_out,
                          "training report JSON (default: <out>.report.json)");

    // inject
    auto* inject_cmd = app.add_subcommand("inject", "apply the bias direction to embeddings");
    std::string inject_in, inject_out, inject_direction, inject_module;
    bool no_adapt = false;
    std::optional<double> gain;
    inject_cmd->add_option("--in", inject_in, "input embeddings (EBIN)");
    inject_cmd->add_option("--out", inject_out, "output embeddings (EBIN)");
    inject_cmd->add_option("--direction", inject_direction, "bias direction (BDIR)");
    inject_cmd->add_option("--module", inject_module, "adaptive module (ABCM)");
    inject_cmd->add_flag("--no-adapt", no_adapt, "add the fixed direction instead");
    inject_cmd->add_option("--gain", gain, "direction gain (fixed mode only, default 1)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "embedding-space diagnostics");
    std::string eval_module, eval_direction, eval_dataset, eval_transfer, eval_out;
    std::optional<std::size_t> eval_subsample;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--module", eval_module, "adaptive module (ABCM)");
    eval_cmd->add_option("--direction", eval_direction, "bias direction (BDIR)");
    eval_cmd->add_option("--dataset", eval_dataset, "evaluation dataset (EBPD)");
    eval_cmd->add_option("--transfer", eval_transfer, "out-of-domain dataset (EBPD)");
    eval_cmd->add_option("--subsample", eval_subsample, "evaluate on K seeded-shuffled pairs");
    eval_cmd->add_option("--seed", eval_seed, "seed for --subsample");
    eval_cmd->add_option("--out", eval_out, "report JSON path");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "dump a file's header and meta as JSON");
    std::string inspect_in;
    inspect_cmd->add_option("--in", inspect_in, "any EBPD/BDIR/ABCM/EBIN file");

    // --config is accepted in any position; load_config already consumed it.
    for (CLI::App* sub : app.get_subcommands(nullptr))
        sub->add_option("--config", config_path, "JSON config file; explicit flags win");

    try {
        apply_config(cfg, "instruct",
                     {{"bias", [&](const json& v) { bias_description = v.get<std::string>(); }},
                      {"count", [&](const json& v) { instruct_count = v.get<std::size_t>(); }},
                      {"out", [&](const json& v) { instruct_out = v.get<std::string>(); }}});
        apply_config(cfg, "ingest",
                     {{"neutral", [&](const json& v) { neutral_path = v.get<std::string>(); }},
                      {"biased", [&](const json& v) { biased_path = v.get<std::string>(); }},
                      {"provider", [&](const json& v) { provider_kind = v.get<std::string>(); }},
                      {"manifest", [&](const json& v) { manifest_path = v.get<std::string>(); }},
                      {"endpoint", [&](const json& v) { endpoint = v.get<std::string>(); }},
                      {"bias-label",
                       [&](const json& v) { ingest_bias_label = v.get<std::string>(); }},
                      {"subsample",
                       [&](const json& v) { ingest_subsample = v.get<std::size_t>(); }},
                      {"seed", [&](const json& v) { ingest_seed = v.get<std::uint64_t>(); }},
                      {"out", [&](const json& v) { ingest_out = v.get<std::string>(); }}});
        apply_config(cfg, "direction",
                     {{"dataset", [&](const json& v) { dir_dataset = v.get<std::string>(); }},
                      {"out", [&](const json& v) { dir_out = v.get<std::string>(); }},
                      {"stats", [&](const json& v) { dir_stats_out = v.get<std::string>(); }},
                      {"subsample", [&](const json& v) { dir_subsample = v.get<std::size_t>(); }},
                      {"seed", [&](const json& v) { dir_seed = v.get<std::uint64_t>(); }}});
        apply_config(cfg, "train",
                     {{"dataset", [&](const json& v) { train_dataset = v.get<std::string>(); }},
                      {"direction",
                       [&](const json& v) { train_direction = v.get<std::string>(); }},
                      {"mode", [&](const json& v) { tf.mode = v.get<std::string>(); }},
                      {"r", [&](const json& v) { tf.r = v.get<std::size_t>(); }},
                      {"epochs", [&](const json& v) { tf.epochs = v.get<std::size_t>(); }},
                      {"lr", [&](const json& v) { tf.lr = v.get<double>(); }},
                      {"seed", [&](const json& v) { tf.seed = v.get<std::uint64_t>(); }},
                      {"subsample",
                       [&](const json& v) { train_subsample = v.get<std::size_t>(); }},
                      {"out", [&](const json& v) { train_out = v.get<std::string>(); }},
                      {"report", [&](const json& v) { train_report_out = v.get<std::string>(); }}});
        apply_config(cfg, "inject",
                     {{"in", [&](const json& v) { inject_in = v.get<std::string>(); }},
                      {"out", [&](const json& v) { inject_out = v.get<std::string>(); }},
                      {"direction",
                       [&](const json& v) { inject_direction = v.get<std::string>(); }},
                      {"module", [&](const json& v) { inject_module = v.get<std::string>(); }},
                      {"no-adapt", [&](const json& v) { no_adapt = v.get<bool>(); }},
                      {"gain", [&](const json& v) { gain = v.get<double>(); }}});
        apply_config(cfg, "eval",
                     {{"module", [&](const json& v) { eval_module = v.get<std::string>(); }},
                      {"direction",
                       [&](const json& v) { eval_direction = v.get<std::string>(); }},
                      {"dataset", [&](const json& v) { eval_dataset = v.get<std::string>(); }},
                      {"transfer", [&](const json& v) { eval_transfer = v.get<std::string>(); }},
                      {"subsample",
                       [&](const json& v) { eval_subsample = v.get<std::size_t>(); }},
                      {"seed", [&](const json& v) { eval_seed = v.get<std::uint64_t>(); }},
                      {"out", [&](const json& v) { eval_out = v.get<std::string>(); }}});
    } catch (const embsteer::Error& e) {
        print_error(e.category(), e.what());
        return exit_code(e.category());
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error(embsteer::ErrorCategory::usage, e.what());
        return 2;
    }

    try {
        if (instruct->parsed()) {
            require_value(bias_description, "--bias");
            const std::string text = embsteer::emit_llm_instruction(bias_description,
                                                                    instruct_count);
            if (instruct_out.empty())
                std::cout << text;
            else
                write_text(instruct_out, text);
            return 0;
        }

        if (ingest->parsed()) {
            require_value(neutral_path, "--neutral");
            require_value(biased_path, "--biased");
            require_value(ingest_out, "--out");
            const auto neutral = embsteer::read_prompt_lines(neutral_path);
            const auto biased = embsteer::read_prompt_lines(biased_path);
            auto provider = make_provider(provider_kind, manifest_path, endpoint);
            embsteer::PairDataset ds =
                embsteer::ingest_pairs(*provider, neutral, biased, ingest_bias_label);
            if (ingest_subsample) ds = embsteer::subsample(ds, *ingest_subsample, ingest_seed);
            embsteer::write_dataset(ingest_out, ds);
            std::cout << "wrote " << ingest_out << " with " << ds.size() << " pairs ("
                      << ds.d << "x" << ds.l << ")\n";
            return 0;
        }

        if (direction->parsed()) {
            require_value(dir_dataset, "--dataset");
            require_value(dir_out, "--out");
            embsteer::PairDataset ds = embsteer::read_dataset(dir_dataset);
            if (dir_subsample) ds = embsteer::subsample(ds, *dir_subsample, dir_seed);
            const embsteer::Matrix dir = embsteer::compute_direction(ds);
            const embsteer::DirectionStats stats = embsteer::direction_stats(ds, dir);
            json meta{{"source_dataset_digest",
                       embsteer::digest_hex(embsteer::payload_digest(ds))},
                      {"pairs_used", ds.size()}};
            embsteer::write_direction(dir_out, dir, static_cast<std::uint32_t>(ds.size()),
                                      meta);
            const json stats_json = stats.to_json();
            std::cout << stats_json.dump(2) << "\n";
            if (!dir_stats_out.empty()) write_json(dir_stats_out, stats_json);
            return 0;
        }

        if (train_cmd->parsed()) {
            require_value(train_dataset, "--dataset");
            require_value(train_direction, "--direction");
            require_value(train_out, "--out");

            embsteer::TrainConfig config;
            config.epochs = tf.epochs;
            config.learning_rate = tf.lr;
            config.seed = tf.seed;
            config.mode = embsteer::parse_mode(tf.mode);
            config.r = tf.r;
            config.validate();

            embsteer::PairDataset ds = embsteer::read_dataset(train_dataset);
            if (train_subsample) ds = embsteer::subsample(ds, *train_subsample, tf.seed);
            const embsteer::DirectionFile dir = embsteer::read_direction(train_direction);

            auto [module, report] = embsteer::train(ds, dir.direction, config);
            for (std::size_t epoch = 0; epoch < report.loss_trace.size(); ++epoch)
                std::cout << "epoch " << epoch << " loss " << report.loss_trace[epoch] << "\n";

            embsteer::write_checkpoint(train_out, module, report.checkpoint_meta());
            const fs::path report_path = train_report_out.empty()
                                             ? fs::path(train_out + ".report.json")
                                             : fs::path(train_report_out);
            write_json(report_path, report.to_json());
            return 0;
        }

        if (inject_cmd->parsed()) {
            require_value(inject_in, "--in");
            require_value(inject_out, "--out");
            require_value(inject_direction, "--direction");
            if (gain && !no_adapt)
                throw embsteer::UsageError("--gain only applies together with --no-adapt");
            if (!no_adapt && inject_module.empty())
                throw embsteer::UsageError("adaptive injection needs --module "
                                           "(or pass --no-adapt)");
            const embsteer::EmbeddingBatch batch = embsteer::read_batch(inject_in);
            const embsteer::DirectionFile dir = embsteer::read_direction(inject_direction);

            embsteer::EmbeddingBatch out;
            out.d = batch.d;
            out.l = batch.l;
            out.meta = batch.meta;
            if (no_adapt) {
                const double g = gain.value_or(1.0);
                out.embeddings.reserve(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    if (!batch.embeddings[i].same_shape(dir.direction))
                        throw embsteer::DimensionError(
                            "batch embedding " + std::to_string(i) + " does not match direction");
                    out.embeddings.push_back(
                        embsteer::inject_fixed(dir.direction, batch.embeddings[i], g));
                }
            } else {
                const embsteer::CheckpointFile ckpt = embsteer::read_checkpoint(inject_module);
                out.embeddings = embsteer::inject_batch(ckpt.module, dir.direction,
                                                        batch.embeddings);
            }
            embsteer::write_batch(inject_out, out);
            std::cout << "wrote " << inject_out << " with " << out.size() << " embeddings\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            require_value(eval_module, "--module");
            require_value(eval_direction, "--direction");
            require_value(eval_dataset, "--dataset");
            require_value(eval_out, "--out");
            const embsteer::CheckpointFile ckpt = embsteer::read_checkpoint(eval_module);
            const embsteer::DirectionFile dir = embsteer::read_direction(eval_direction);
            embsteer::PairDataset ds = embsteer::read_dataset(eval_dataset);
            if (eval_subsample) ds = embsteer::subsample(ds, *eval_subsample, eval_seed);

            json out_json;
            if (eval_transfer.empty()) {
                out_json = embsteer::evaluate(ckpt.module, dir.direction, ds).to_json();
            } else {
                const embsteer::PairDataset target = embsteer::read_dataset(eval_transfer);
                const auto [source_report, target_report] =
                    embsteer::transfer_report(ckpt.module, dir.direction, ds, target);
                out_json = json{{"source", source_report.to_json()},
                                {"target", target_report.to_json()}};
            }
            write_json(eval_out, out_json);
            std::cout << "wrote " << eval_out << "\n";
            return 0;
        }

        if (inspect_cmd->parsed()) {
            require_value(inspect_in, "--in");
            std::cout << embsteer::inspect_file(inspect_in).to_json().dump(2) << "\n";
            return 0;
        }
    } catch (const embsteer::FormatError& e) {
        print_error(e.category(), e.what(), embsteer::to_string(e.code()));
        return exit_code(e.category());
    } catch (const embsteer::Error& e) {
        print_error(e.category(), e.what());
        return exit_code(e.category());
    } catch (const std::exception& e) {
        print_error(embsteer::ErrorCategory::internal, e.what());
        return 1;
    }
    return 0;
}
