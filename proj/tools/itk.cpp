// Experiment harness: every library module exposed as a subcommand, with
// JSON on stdout, CSV sweeps behind --out, and a run manifest next to every
// file the tool writes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "itk/code_tree.hpp"
#include "itk/codec.hpp"
#include "itk/compressor.hpp"
#include "itk/errors.hpp"
#include "itk/fsq.hpp"
#include "itk/model.hpp"
#include "itk/router.hpp"
#include "itk/source.hpp"
#include "itk/trainer.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitIo = 4;
constexpr int kExitDivergence = 5;

int thread_cap() {
    const char* env = std::getenv("ITK_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n >= 1 ? n : 1;
}

std::uint64_t fnv1a64(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw itk::IoError("cannot open " + path);
    std::ostringstream ss;
    ss << file.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_file_u8(const std::string& path) {
    auto s = read_file_bytes(path);
    return {s.begin(), s.end()};
}

void write_file_u8(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw itk::IoError("cannot open " + path);
    file.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!file) throw itk::IoError("write failed for " + path);
}

// One manifest per invocation, placed next to the primary output.
void write_manifest(const std::string& subcommand, const json& resolved_config,
                    std::uint64_t seed, const std::vector<std::string>& input_files,
                    const std::vector<std::string>& outputs) {
    if (outputs.empty()) return;
    std::uint64_t hash = fnv1a64(resolved_config.dump());
    for (const auto& path : input_files) hash = fnv1a64(read_file_bytes(path), hash);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    json manifest = {
        {"subcommand", subcommand},
        {"config", resolved_config},
        {"seed", seed},
        {"input_hash", std::string(hex)},
        {"outputs", outputs},
        {"threads", thread_cap()},
    };
    std::string path = outputs.front() + ".manifest.json";
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw itk::IoError("cannot open " + path);
    file << manifest.dump(2) << '\n';
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw itk::IoError("cannot open " + path);
    file << header << '\n';
    for (const auto& r : rows) file << r << '\n';
    if (!file) throw itk::IoError("write failed for " + path);
}

json tree_json(const itk::CodeTree& tree) {
    return json::parse(tree.to_nested_json());
}

// ---- theory ----

struct TheoryArgs {
    std::string probs;
    int base = 2;
    int arity = 2;
    std::string objective = "uniform-loss";
    std::string mode = "exhaustive";
    int max_m = 3;
    std::string beta = "auto";
    std::string gaps;
    std::string out;
};

int run_theory_entropy(const TheoryArgs& a) {
    auto src = itk::parse_source(a.probs);
    double h = itk::entropy(src, a.base);
    emit({{"entropy", h}, {"base", a.base}, {"items", src.size()}});
    if (!a.out.empty()) {
        write_csv(a.out, "entropy,base,items",
                  {std::to_string(h) + "," + std::to_string(a.base) + "," +
                   std::to_string(src.size())});
        write_manifest("theory entropy", {{"probs", a.probs}, {"base", a.base}}, 0,
                       {}, {a.out});
    }
    return kExitOk;
}

int run_theory_huffman(const TheoryArgs& a) {
    auto src = itk::parse_source(a.probs);
    auto tree = itk::huffman(src, a.arity);
    auto depths = tree.item_depths(src.size());
    double e_len = itk::expected_length(tree, src);
    double h = itk::entropy(src, a.arity);
    emit({{"expected_length", e_len},
          {"entropy", h},
          {"arity", a.arity},
          {"depths", depths},
          {"kraft_sum", tree.kraft_sum(src.size())},
          {"tree", tree_json(tree)}});
    if (!a.out.empty()) {
        std::vector<std::string> rows;
        for (std::size_t i = 0; i < depths.size(); ++i)
            rows.push_back(std::to_string(i) + "," + std::to_string(src.probs[i]) +
                           "," + std::to_string(depths[i]));
        write_csv(a.out, "item,prob,depth", rows);
        write_manifest("theory huffman", {{"probs", a.probs}, {"arity", a.arity}}, 0,
                       {}, {a.out});
    }
    return kExitOk;
}

int run_theory_tree_search(const TheoryArgs& a) {
    auto src = itk::parse_source(a.probs);
    itk::TreeObjective obj;
    if (a.objective == "uniform-loss")
        obj = itk::TreeObjective::kUniformLoss;
    else if (a.objective == "expected-length")
        obj = itk::TreeObjective::kExpectedLength;
    else
        throw itk::ValidationError("unknown objective: " + a.objective);
    itk::SearchMode mode;
    if (a.mode == "exhaustive")
        mode = itk::SearchMode::kExhaustive;
    else if (a.mode == "lift")
        mode = itk::SearchMode::kLift;
    else
        throw itk::ValidationError("unknown mode: " + a.mode);

    auto tree = itk::search_optimal_tree(src, obj, mode);
    emit({{"uniform_loss", itk::tree_loss(tree, src)},
          {"expected_length", itk::expected_length(tree, src)},
          {"depths", tree.item_depths(src.size())},
          {"tree", tree_json(tree)}});
    return kExitOk;
}

int run_theory_theorem2(const TheoryArgs& a) {
    auto rows = itk::theorem2_gap(a.max_m);
    json out = json::array();
    std::vector<std::string> csv;
    for (const auto& r : rows) {
        out.push_back({{"m", r.m},
                       {"h2", r.h2},
                       {"e_depth", r.e_depth},
                       {"ratio", r.ratio},
                       {"exhaustive", r.exhaustive}});
        std::ostringstream line;
        line.precision(17);
        line << r.m << ',' << r.h2 << ',' << r.e_depth << ',' << r.ratio << ','
             << (r.exhaustive ? 1 : 0);
        csv.push_back(line.str());
    }
    emit(out);
    if (!a.out.empty()) {
        write_csv(a.out, "m,h2,e_depth,ratio,exhaustive", csv);
        write_manifest("theory theorem2", {{"max_m", a.max_m}}, 0, {}, {a.out});
    }
    return kExitOk;
}

int run_theory_theorem3(const TheoryArgs& a) {
    auto src = itk::parse_source(a.probs);
    std::vector<double> gaps(src.size(), 0.0);
    if (!a.gaps.empty()) {
        std::stringstream ss(a.gaps);
        std::string tok;
        gaps.clear();
        while (std::getline(ss, tok, ',')) gaps.push_back(std::stod(tok));
        if (gaps.size() != src.size())
            throw itk::ValidationError("gap count must match item count");
    }
    double mean_s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i)
        mean_s += src.probs[i] *
                  (-std::log2(src.probs[i]) / std::log2(double(a.arity)) + gaps[i]);
    double beta = a.beta == "auto" ? mean_s : std::stod(a.beta);
    auto res = itk::check_theorem3_bound(src, beta, gaps, a.arity);
    emit({{"beta", beta},
          {"lhs", res.lhs},
          {"rhs", res.rhs},
          {"margin", res.margin},
          {"pass", res.pass}});
    if (!a.out.empty()) {
        std::ostringstream line;
        line.precision(17);
        line << beta << ',' << res.lhs << ',' << res.rhs << ',' << res.margin << ','
             << (res.pass ? 1 : 0);
        write_csv(a.out, "beta,lhs,rhs,margin,pass", {line.str()});
        write_manifest("theory theorem3", {{"probs", a.probs}, {"beta", beta}}, 0, {},
                       {a.out});
    }
    return kExitOk;
}

// ---- dataset / train / eval / tokenize / detokenize / bpp ----

struct DatasetArgs {
    std::string out;
    int count = 256;
    std::uint64_t seed = 0;
    double noise_sigma = 0.01;
};

int run_dataset(const DatasetArgs& a) {
    auto set = itk::make_eval_set(a.seed, a.count, a.noise_sigma);
    itk::save_dataset(a.out, set);
    json config = {{"count", a.count}, {"noise_sigma", a.noise_sigma}};
    write_manifest("dataset", config, a.seed, {}, {a.out});
    emit({{"written", a.out}, {"count", a.count}});
    return kExitOk;
}

struct TrainArgs {
    std::string config_path;
    std::string checkpoint = "checkpoint.itkm";
    std::string logs;
    // flag overrides; optional so absent flags defer to the config file
    std::optional<int> steps, batch;
    std::optional<double> lr_start, lr_end, beta, noise_sigma, ema_decay;
    std::optional<std::string> router_mode;
    std::vector<double> flex;
    std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a) {
    itk::TrainConfig config;
    std::vector<std::string> inputs;
    if (!a.config_path.empty()) {
        config = itk::train_config_from_json(json::parse(read_file_bytes(a.config_path)));
        inputs.push_back(a.config_path);
    }
    if (a.steps) config.steps = *a.steps;
    if (a.batch) config.batch = *a.batch;
    if (a.lr_start) config.lr_start = *a.lr_start;
    if (a.lr_end) config.lr_end = *a.lr_end;
    if (a.beta) config.beta = *a.beta;
    if (a.noise_sigma) config.noise_sigma = *a.noise_sigma;
    if (a.ema_decay) config.ema_decay = *a.ema_decay;
    if (a.router_mode) config.router_mode = itk::router_mode_from_string(*a.router_mode);
    if (!a.flex.empty()) {
        config.flex_betas = a.flex;
        config.router_mode = itk::RouterMode::kFlex;
    }
    if (a.seed) config.seed = *a.seed;
    config.validate();

    auto result = itk::train(config);
    itk::save_checkpoint(a.checkpoint,
                         {result.params, result.router, itk::default_fsq_config()});
    std::vector<std::string> outputs = {a.checkpoint};
    if (!a.logs.empty()) {
        itk::write_logs_csv(a.logs, result.logs);
        outputs.push_back(a.logs);
    }
    write_manifest("train", itk::to_json(config), config.seed, inputs, outputs);
    emit({{"checkpoint", a.checkpoint},
          {"final_loss", result.logs.back().loss},
          {"final_ema", result.logs.back().ema},
          {"steps", config.steps}});
    return kExitOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::vector<double> bpp16;
    int samples = 256;
    std::uint64_t seed = 1;
    double noise_sigma = 0.01;
    std::string out;
    std::string router = "elbo";
    std::optional<double> threshold;
};

int run_eval(const EvalArgs& a) {
    auto ckpt = itk::load_checkpoint(a.checkpoint);
    std::vector<itk::ToySignal> set;
    std::vector<std::string> inputs = {a.checkpoint};
    if (!a.data.empty()) {
        set = itk::load_dataset(a.data);
        inputs.push_back(a.data);
    } else {
        set = itk::make_eval_set(a.seed, a.samples, a.noise_sigma);
    }

    if (a.router == "search") {
        if (!a.threshold)
            throw itk::ValidationError("--router search requires --threshold");
        double mse = 0.0, mean_n = 0.0, probes = 0.0;
        int unreached = 0;
        for (const auto& signal : set) {
            auto ff = itk::forward_full(signal, ckpt.params, ckpt.fsq);
            auto scores = itk::per_token_scores(ff.per_element_sq_errors,
                                                itk::patch_map(), itk::kTokens);
            auto probe = [&](int n) {
                auto mask = itk::build_mask(scores, std::max(1, n));
                return itk::forward_adaptive(signal, mask, ckpt.params, ckpt.fsq).loss;
            };
            auto res = itk::route_by_search(*a.threshold, probe, itk::kTokens, 1);
            auto mask = itk::build_mask(scores, res.n_x);
            mse += itk::forward_adaptive(signal, mask, ckpt.params, ckpt.fsq).loss;
            mean_n += res.n_x;
            probes += res.extra_nfes;
            unreached += res.reached ? 0 : 1;
        }
        double count = static_cast<double>(set.size());
        json out = {{"router", "search"},
                    {"threshold", *a.threshold},
                    {"mse", mse / count},
                    {"mean_n_x", mean_n / count},
                    {"extra_nfes", probes / count},
                    {"unreached", unreached}};
        emit(out);
        if (!a.out.empty()) {
            std::ostringstream line;
            line.precision(17);
            line << *a.threshold << ',' << mse / count << ',' << mean_n / count << ','
                 << probes / count << ',' << unreached;
            write_csv(a.out, "threshold,mse,mean_n_x,extra_nfes,unreached", {line.str()});
            write_manifest("eval", {{"router", "search"}, {"threshold", *a.threshold}},
                           a.seed, inputs, {a.out});
        }
        return kExitOk;
    }

    if (a.bpp16.empty())
        throw itk::ValidationError("eval needs --bpp16 targets (or --router search)");
    auto rows = itk::evaluate(ckpt.params, ckpt.router, set, a.bpp16, ckpt.fsq);
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"target_bpp16", r.target_bpp16},
                       {"beta", r.beta},
                       {"realized_bpp16", r.realized_bpp16},
                       {"mean_n_x", r.mean_n_x},
                       {"mse", r.mse},
                       {"psnr", r.psnr},
                       {"spearman", r.spearman},
                       {"nfe_encoder", r.nfe_encoder},
                       {"nfe_decoder", r.nfe_decoder},
                       {"search_probes", r.search_probes}});
    emit(out);
    if (!a.out.empty()) {
        itk::write_eval_csv(a.out, rows);
        write_manifest("eval", {{"bpp16", a.bpp16}, {"samples", set.size()}}, a.seed,
                       inputs, {a.out});
    }
    return kExitOk;
}

struct TokenizeArgs {
    std::string checkpoint;
    std::string data;
    std::string out_dir = ".";
    std::optional<double> bpp16;
    std::optional<double> beta;
};

int run_tokenize(const TokenizeArgs& a) {
    auto ckpt = itk::load_checkpoint(a.checkpoint);
    auto set = itk::load_dataset(a.data);
    if (set.empty()) throw itk::ValidationError("tokenize: dataset is empty");

    itk::RouterState state = ckpt.router;
    if (a.bpp16)
        state.beta = itk::beta_from_bpp16(*a.bpp16, itk::kTokens, ckpt.fsq.exact_bits());
    else if (a.beta)
        state.beta = *a.beta;

    // normalize by the set mean when it is large enough, like evaluate()
    std::optional<double> denom;
    if (static_cast<int>(set.size()) >= itk::kEvalEmaFallback) {
        double mean = 0.0;
        for (const auto& s : set)
            mean += itk::forward_full(s, ckpt.params, ckpt.fsq).nll_proxy;
        denom = mean / static_cast<double>(set.size());
    }

    std::filesystem::create_directories(a.out_dir);
    json summary = json::array();
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < set.size(); ++i) {
        auto res = itk::adaptive_tokenize(set[i], ckpt.params, state, ckpt.fsq, denom);
        auto bytes = itk::serialize(res.stream.codes, res.stream.mask, ckpt.fsq);
        char name[32];
        std::snprintf(name, sizeof name, "%04zu.itk", i);
        std::string path = (std::filesystem::path(a.out_dir) / name).string();
        write_file_u8(path, bytes);
        outputs.push_back(path);
        summary.push_back({{"file", path},
                           {"n_x", res.n_x},
                           {"bpp16", itk::bpp16(res.n_x, itk::kTokens,
                                                ckpt.fsq.exact_bits(), true)},
                           {"mse", res.mse},
                           {"nfe_encoder", res.nfe.encoder},
                           {"nfe_decoder", res.nfe.decoder}});
    }
    std::string summary_path =
        (std::filesystem::path(a.out_dir) / "summary.json").string();
    std::ofstream sf(summary_path, std::ios::trunc);
    if (!sf) throw itk::IoError("cannot open " + summary_path);
    sf << summary.dump(2) << '\n';
    outputs.insert(outputs.begin(), summary_path);
    write_manifest("tokenize",
                   {{"beta", state.beta}, {"bpp16", a.bpp16 ? json(*a.bpp16) : json()}},
                   0, {a.checkpoint, a.data}, outputs);
    emit({{"streams", set.size()}, {"summary", summary_path}});
    return kExitOk;
}

struct DetokenizeArgs {
    std::string checkpoint;
    std::vector<std::string> streams;
    std::string reference;
    std::string out;
};

int run_detokenize(const DetokenizeArgs& a) {
    auto ckpt = itk::load_checkpoint(a.checkpoint);
    std::vector<itk::ToySignal> reference;
    if (!a.reference.empty()) reference = itk::load_dataset(a.reference);

    json report = json::array();
    std::ofstream recon_out;
    if (!a.out.empty()) {
        recon_out.open(a.out, std::ios::trunc);
        if (!recon_out) throw itk::IoError("cannot open " + a.out);
    }
    for (std::size_t i = 0; i < a.streams.size(); ++i) {
        auto stream = itk::deserialize(read_file_u8(a.streams[i]));
        if (static_cast<int>(stream.mask.size()) != itk::kTokens)
            throw itk::CodecError(itk::CodecError::Kind::kBadValue,
                                  "stream n_max does not match this model");
        auto recon = itk::adaptive_detokenize(stream, ckpt.params);
        json entry = {{"file", a.streams[i]},
                      {"n_x", static_cast<int>(stream.codes.size())}};
        if (i < reference.size()) {
            entry["mse"] = itk::mse(reference[i].values, recon);
            entry["psnr"] = itk::psnr(reference[i].values, recon, 2.0);
        }
        report.push_back(entry);
        if (recon_out) recon_out << json(recon).dump() << '\n';
    }
    emit(report);
    if (!a.out.empty())
        write_manifest("detokenize", {{"streams", a.streams.size()}}, 0,
                       {a.checkpoint}, {a.out});
    return kExitOk;
}

struct BppArgs {
    std::string stream;
    bool no_mask = false;
    bool serialized_width = false;
};

int run_bpp(const BppArgs& a) {
    auto stream = itk::deserialize(read_file_u8(a.stream));
    int n_x = stream.mask.popcount();
    int n_max = static_cast<int>(stream.mask.size());
    double bits = a.serialized_width ? stream.config.serialized_bits()
                                     : stream.config.exact_bits();
    emit({{"n_x", n_x},
          {"n_max", n_max},
          {"bits_per_token", bits},
          {"bpp16", itk::bpp16(n_x, n_max, bits, !a.no_mask)}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-theoretic adaptive tokenization toolkit"};
    app.require_subcommand(1);

    TheoryArgs th;
    auto* theory = app.add_subcommand("theory", "prefix-code tree theory");
    theory->require_subcommand(1);
    auto add_probs = [&](CLI::App* sub) {
        sub->add_option("--probs", th.probs, "'geometric:M' or comma-separated probs")
            ->required();
        sub->add_option("--out", th.out, "CSV output path");
    };
    auto* t_ent = theory->add_subcommand("entropy", "source entropy");
    add_probs(t_ent);
    t_ent->add_option("--base", th.base, "logarithm base");
    auto* t_huf = theory->add_subcommand("huffman", "Huffman code construction");
    add_probs(t_huf);
    t_huf->add_option("--arity", th.arity, "code alphabet size");
    auto* t_ts = theory->add_subcommand("tree-search", "optimal tree search");
    add_probs(t_ts);
    t_ts->add_option("--objective", th.objective, "uniform-loss | expected-length");
    t_ts->add_option("--mode", th.mode, "exhaustive | lift");
    auto* t_t2 = theory->add_subcommand("theorem2", "uniform-router gap sweep");
    t_t2->add_option("--max-m", th.max_m, "largest geometric-source M");
    t_t2->add_option("--out", th.out, "CSV output path");
    auto* t_t3 = theory->add_subcommand("theorem3", "router-bound check");
    add_probs(t_t3);
    t_t3->add_option("--beta", th.beta, "budget, or 'auto' for the minimum");
    t_t3->add_option("--gaps", th.gaps, "comma-separated per-item ELBO gaps");
    t_t3->add_option("--arity", th.arity, "code alphabet size");

    DatasetArgs ds;
    auto* dataset = app.add_subcommand("dataset", "write a synthetic JSONL dataset");
    dataset->add_option("--out", ds.out)->required();
    dataset->add_option("--count", ds.count);
    dataset->add_option("--seed", ds.seed);
    dataset->add_option("--noise-sigma", ds.noise_sigma);

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "run the two-phase trainer");
    train_cmd->add_option("--config", tr.config_path, "JSON config file");
    train_cmd->add_option("--checkpoint", tr.checkpoint, "checkpoint output path");
    train_cmd->add_option("--logs", tr.logs, "per-step CSV log path");
    train_cmd->add_option("--steps", tr.steps);
    train_cmd->add_option("--batch", tr.batch);
    train_cmd->add_option("--lr-start", tr.lr_start);
    train_cmd->add_option("--lr-end", tr.lr_end);
    train_cmd->add_option("--router-mode", tr.router_mode,
                          "fixed_beta | flex | uniform_baseline | full_length");
    train_cmd->add_option("--beta", tr.beta);
    train_cmd->add_option("--flex", tr.flex, "flex beta set")->delimiter(',');
    train_cmd->add_option("--seed", tr.seed);
    train_cmd->add_option("--noise-sigma", tr.noise_sigma);
    train_cmd->add_option("--ema-decay", tr.ema_decay);

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "evaluation sweep over BPP16 targets");
    eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
    eval_cmd->add_option("--bpp16", ev.bpp16, "BPP16 targets")->delimiter(',');
    eval_cmd->add_option("--data", ev.data, "JSONL eval set (default: synthetic)");
    eval_cmd->add_option("--samples", ev.samples);
    eval_cmd->add_option("--seed", ev.seed);
    eval_cmd->add_option("--noise-sigma", ev.noise_sigma);
    eval_cmd->add_option("--out", ev.out, "CSV output path");
    eval_cmd->add_option("--router", ev.router, "elbo | search");
    eval_cmd->add_option("--threshold", ev.threshold, "search target loss");

    TokenizeArgs tk;
    auto* tok_cmd = app.add_subcommand("tokenize", "emit .itk streams per signal");
    tok_cmd->add_option("--checkpoint", tk.checkpoint)->required();
    tok_cmd->add_option("--data", tk.data)->required();
    tok_cmd->add_option("--out-dir", tk.out_dir);
    tok_cmd->add_option("--bpp16", tk.bpp16, "budget (sets beta)");
    tok_cmd->add_option("--beta", tk.beta, "router beta override");

    DetokenizeArgs dt;
    auto* det_cmd = app.add_subcommand("detokenize", "reconstruct .itk streams");
    det_cmd->add_option("--checkpoint", dt.checkpoint)->required();
    det_cmd->add_option("--streams", dt.streams, ".itk files, dataset order")
        ->required();
    det_cmd->add_option("--reference", dt.reference, "JSONL reference for metrics");
    det_cmd->add_option("--out", dt.out, "reconstruction JSONL path");

    BppArgs bp;
    auto* bpp_cmd = app.add_subcommand("bpp", "BPP16 of a stream file");
    bpp_cmd->add_option("--stream", bp.stream)->required();
    bpp_cmd->add_flag("--no-mask", bp.no_mask, "drop the 1/16 mask overhead");
    bpp_cmd->add_flag("--serialized-width", bp.serialized_width,
                      "use ceil(log2 C) instead of exact log2 C");

    try {
        app.parse(argc, argv);
        if (t_ent->parsed()) return run_theory_entropy(th);
        if (t_huf->parsed()) return run_theory_huffman(th);
        if (t_ts->parsed()) return run_theory_tree_search(th);
        if (t_t2->parsed()) return run_theory_theorem2(th);
        if (t_t3->parsed()) return run_theory_theorem3(th);
        if (dataset->parsed()) return run_dataset(ds);
        if (train_cmd->parsed()) return run_train(tr);
        if (eval_cmd->parsed()) return run_eval(ev);
        if (tok_cmd->parsed()) return run_tokenize(tk);
        if (det_cmd->parsed()) return run_detokenize(dt);
        if (bpp_cmd->parsed()) return run_bpp(bp);
        std::cerr << "no subcommand\n";
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const itk::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const itk::IoError& e) {
        std::cerr << "io error: " << e.what() << '\n';
        return kExitIo;
    } catch (const itk::CodecError& e) {
        std::cerr << "codec error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}
