#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "itk/codec.hpp"
#include "itk/model.hpp"
#include "itk/router.hpp"
#include "itk/source.hpp"

namespace itk {

enum class RouterMode { kFixedBeta, kFlex, kUniformBaseline, kFullLength };

std::string to_string(RouterMode mode);
RouterMode router_mode_from_string(const std::string& name);

struct TrainConfig {
    int steps = 4000;
    int batch = 8;
    double lr_start = 3e-3;   // cosine-decayed to lr_end
    double lr_end = 3e-4;
    RouterMode router_mode = RouterMode::kFixedBeta;
    double beta = 8.0;
    std::vector<double> flex_betas = {4.0, 8.0, 12.0, 16.0};
    std::uint64_t seed = 0;
    double noise_sigma = 0.01;
    double ema_decay = 0.99;
    double divergence_threshold = 1e3;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct TrainLogRow {
    int step = 0;
    double loss = 0.0;   // mean batch MSE
    double n_x = 0.0;    // mean routed length over the batch
    double ema = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    ModelParams params;
    RouterState router;
    std::vector<TrainLogRow> logs;
};

using SignalStream = std::function<ToySignal(std::uint64_t index)>;

// Two-phase run: the first 25% of steps trains with the full mask, then the
// configured router takes over. Throws DivergenceError past the loss threshold.
TrainResult train(const TrainConfig& config);
TrainResult train(const TrainConfig& config, const SignalStream& stream);

void write_logs_csv(const std::string& path, const std::vector<TrainLogRow>& logs);

struct EvalRow {
    double target_bpp16 = 0.0;
    double beta = 0.0;
    double realized_bpp16 = 0.0;   // mean over the eval set, mask included
    double mean_n_x = 0.0;
    double mse = 0.0;              // mean per-sample MSE
    double psnr = 0.0;             // from the mean MSE, peak-to-peak 2
    double spearman = 0.0;         // rank corr of (segment_count, N_x)
    double nfe_encoder = 0.0;      // per-sample means
    double nfe_decoder = 0.0;
    double search_probes = 0.0;    // route_by_search decoder probes per sample
};

// One row per BPP16 target. N_x normalizes by the eval-set mean error when
// the set has >= kEvalEmaFallback samples, else by the training EMA.
constexpr int kEvalEmaFallback = 10;
std::vector<EvalRow> evaluate(const ModelParams& params, const RouterState& router,
                              const std::vector<ToySignal>& eval_set,
                              const std::vector<double>& bpp16_targets,
                              const FsqConfig& fsq);

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows);

// Budget-constrained allocation: curves[i][g] = loss of sample i when given
// grid[g] tokens (grid ascending). Greedy on concavified marginal gains,
// subject to sum of tokens <= budget_mean * #samples. Returns one grid value
// per sample.
std::vector<int> oracle_allocate(const std::vector<std::vector<double>>& curves,
                                 const std::vector<int>& grid, double budget_mean);

// Probing grid for oracle budget allocation.
std::vector<int> oracle_grid();

// Tie-averaged-rank Spearman correlation.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct TokenizeResult {
    TokenStream stream;
    std::vector<double> recon;
    int n_x = 0;
    double nll = 0.0;
    double mse = 0.0;
    NfeCounter nfe;
};

// Inference pipeline: router pass (full-length error), route, mask, adaptive
// pass; exactly 1 encoder + 2 decoder evaluations. `denominator` overrides
// the router EMA.
TokenizeResult adaptive_tokenize(const ToySignal& signal, const ModelParams& params,
                                 const RouterState& router, const FsqConfig& fsq,
                                 std::optional<double> denominator = std::nullopt);

// Reconstruct a serialized stream; bit-identical to the tokenize-side recon.
std::vector<double> adaptive_detokenize(const TokenStream& stream,
                                        const ModelParams& params);

// JSONL dataset I/O: one {"seed", "segment_count", "values"} object per line.
void save_dataset(const std::string& path, const std::vector<ToySignal>& signals);
std::vector<ToySignal> load_dataset(const std::string& path);

// Deterministic held-out set: seeds offset far from the training stream.
std::vector<ToySignal> make_eval_set(std::uint64_t seed, int count,
                                     double noise_sigma = 0.01);

}  // namespace itk
