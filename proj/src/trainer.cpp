#include "itk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

#include "itk/compressor.hpp"
#include "itk/errors.hpp"
#include "itk/rng.hpp"

namespace itk {

namespace {

constexpr int kNMax = kTokens;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    SplitMix64 rng(a ^ (b * 0x9E3779B97F4A7C15ull));
    return rng.next_u64();
}

double cosine_lr(const TrainConfig& c, int step) {
    if (c.steps <= 1) return c.lr_start;
    double t = static_cast<double>(step) / (c.steps - 1);
    return c.lr_end + 0.5 * (c.lr_start - c.lr_end) * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

std::string to_string(RouterMode mode) {
    switch (mode) {
        case RouterMode::kFixedBeta: return "fixed_beta";
        case RouterMode::kFlex: return "flex";
        case RouterMode::kUniformBaseline: return "uniform_baseline";
        case RouterMode::kFullLength: return "full_length";
    }
    throw ValidationError("unknown router mode");
}

RouterMode router_mode_from_string(const std::string& name) {
    if (name == "fixed_beta") return RouterMode::kFixedBeta;
    if (name == "flex") return RouterMode::kFlex;
    if (name == "uniform_baseline") return RouterMode::kUniformBaseline;
    if (name == "full_length") return RouterMode::kFullLength;
    throw ValidationError("unknown router mode: " + name);
}

void TrainConfig::validate() const {
    if (steps <= 0) throw ValidationError("TrainConfig: steps must be positive");
    if (batch <= 0) throw ValidationError("TrainConfig: batch must be positive");
    if (!(lr_end > 0.0 && lr_end <= lr_start))
        throw ValidationError("TrainConfig: need 0 < lr_end <= lr_start");
    if (!(beta > 0.0)) throw ValidationError("TrainConfig: beta must be positive");
    if (router_mode == RouterMode::kFlex && flex_betas.empty())
        throw ValidationError("TrainConfig: flex mode needs a beta set");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
        throw ValidationError("TrainConfig: ema_decay must be in (0, 1)");
    if (!(noise_sigma >= 0.0))
        throw ValidationError("TrainConfig: noise_sigma must be nonnegative");
    if (!(divergence_threshold > 0.0))
        throw ValidationError("TrainConfig: divergence_threshold must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"steps", c.steps},
        {"batch", c.batch},
        {"lr_start", c.lr_start},
        {"lr_end", c.lr_end},
        {"router_mode", to_string(c.router_mode)},
        {"beta", c.beta},
        {"flex_betas", c.flex_betas},
        {"seed", c.seed},
        {"noise_sigma", c.noise_sigma},
        {"ema_decay", c.ema_decay},
        {"divergence_threshold", c.divergence_threshold},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.lr_start = j.value("lr_start", c.lr_start);
    c.lr_end = j.value("lr_end", c.lr_end);
    if (j.contains("router_mode"))
        c.router_mode = router_mode_from_string(j.at("router_mode").get<std::string>());
    c.beta = j.value("beta", c.beta);
    if (j.contains("flex_betas"))
        c.flex_betas = j.at("flex_betas").get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
    c.validate();
    return c;
}

TrainResult train(const TrainConfig& config) {
    return train(config, [&](std::uint64_t index) {
        return sample_signal(mix_seed(config.seed, index + 1), config.noise_sigma);
    });
}

TrainResult train(const TrainConfig& config, const SignalStream& stream) {
    config.validate();
    const auto& layout = ModelParams::layout();
    const FsqConfig fsq = default_fsq_config();

    TrainResult result;
    result.params = ModelParams::init(config.seed);
    result.router = RouterState::make(config.beta, kNMax);
    result.router.ema_decay = config.ema_decay;
    result.router.flex_betas = config.flex_betas;

    std::vector<double> second_moment(layout.total, 0.0);
    const int phase1_steps = config.steps / 4;

    // Phase 1 is the fixed-length pretraining analogue: the compressor and
    // decompressor branches stay at their zero init so the pipeline remains
    // exactly the fixed-length tokenizer. Phase 2 then trains only those
    // branches on top of the frozen encoder/decoder, so the full-length error
    // that drives the router keeps its meaning throughout.
    std::vector<bool> adaptive_param(layout.total, false);
    for (const auto* s : {&layout.c_w1, &layout.c_b1, &layout.c_w2, &layout.c_b2,
                          &layout.c_mix, &layout.d_mix, &layout.d_w1, &layout.d_b1,
                          &layout.d_w2, &layout.d_b2, &layout.fill})
        for (int i = s->offset; i < s->offset + s->size; ++i)
            adaptive_param[i] = true;
    SplitMix64 uniform_rng(mix_seed(config.seed, 0x5EEDBA5Eull));

    for (int step = 0; step < config.steps; ++step) {
        const double lr = cosine_lr(config, step);
        const bool full_phase =
            step < phase1_steps || config.router_mode == RouterMode::kFullLength;

        std::vector<double> grad_sum(layout.total, 0.0);
        double loss_sum = 0.0;
        double n_x_sum = 0.0;

        for (int b = 0; b < config.batch; ++b) {
            const std::uint64_t index =
                static_cast<std::uint64_t>(step) * config.batch + b;
            ToySignal signal = stream(index);

            TokenMask mask;
            if (full_phase) {
                mask = TokenMask::full(kNMax);
            } else {
                auto ff = forward_full(signal, result.params, fsq);
                int n_x = 0;
                switch (config.router_mode) {
                    case RouterMode::kFixedBeta:
                        n_x = route(result.router, ff.nll_proxy);
                        break;
                    case RouterMode::kFlex:
                        n_x = route_flex(result.router, ff.nll_proxy,
                                         mix_seed(config.seed, index + 0xF1E2ull));
                        break;
                    case RouterMode::kUniformBaseline:
                        n_x = result.router.n_min +
                              static_cast<int>(uniform_rng.next_below(
                                  result.router.n_max - result.router.n_min + 1));
                        break;
                    case RouterMode::kFullLength:
                        n_x = kNMax;
                        break;
                }
                auto scores =
                    per_token_scores(ff.per_element_sq_errors, patch_map(), kTokens);
                mask = build_mask(scores, n_x);
                update_ema(result.router, ff.nll_proxy);
            }

            // real quantizer in the forward pass; backward() applies the
            // straight-through rule through the recorded gate
            auto trace = forward_adaptive(signal, mask, result.params, fsq,
                                          /*surrogate=*/false);
            if (full_phase)
                update_ema(result.router, trace.loss * kSignalLength);
            auto grad = backward(trace, result.params);
            for (int i = 0; i < layout.total; ++i) grad_sum[i] += grad[i];
            loss_sum += trace.loss;
            n_x_sum += mask.popcount();
        }

        const double mean_loss = loss_sum / config.batch;
        if (!std::isfinite(mean_loss) || mean_loss > config.divergence_threshold)
            throw DivergenceError("train: loss " + std::to_string(mean_loss) +
                                  " at step " + std::to_string(step));

        // momentumless adaptive step: per-parameter second-moment scaling
        for (int i = 0; i < layout.total; ++i) {
            if (adaptive_param[i] == full_phase) continue;
            double g = grad_sum[i] / config.batch;
            second_moment[i] = 0.99 * second_moment[i] + 0.01 * g * g;
            result.params.flat[i] -= lr * g / (std::sqrt(second_moment[i]) + 1e-8);
        }

        result.logs.push_back({step, mean_loss, n_x_sum / config.batch,
                               result.router.ema_nll.value_or(0.0), lr});
    }
    return result;
}

void write_logs_csv(const std::string& path, const std::vector<TrainLogRow>& logs) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("write_logs_csv: cannot open " + path);
    file << "step,loss,n_x,ema,lr\n";
    file.precision(17);
    for (const auto& row : logs)
        file << row.step << ',' << row.loss << ',' << row.n_x << ',' << row.ema
             << ',' << row.lr << '\n';
    if (!file) throw IoError("write_logs_csv: write failed for " + path);
}

std::vector<EvalRow> evaluate(const ModelParams& params, const RouterState& router,
                              const std::vector<ToySignal>& eval_set,
                              const std::vector<double>& bpp16_targets,
                              const FsqConfig& fsq) {
    if (eval_set.empty()) throw ValidationError("evaluate: eval set is empty");
    const auto pmap = patch_map();

    // One router pass per sample is shared across all targets.
    struct PerSample {
        double nll = 0.0;
        std::vector<double> scores;
    };
    std::vector<PerSample> base(eval_set.size());
    double nll_mean = 0.0;
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        auto ff = forward_full(eval_set[i], params, fsq);
        base[i].nll = ff.nll_proxy;
        base[i].scores = per_token_scores(ff.per_element_sq_errors, pmap, kTokens);
        nll_mean += ff.nll_proxy;
    }
    nll_mean /= static_cast<double>(eval_set.size());

    std::optional<double> denom;
    if (static_cast<int>(eval_set.size()) >= kEvalEmaFallback)
        denom = nll_mean;  // else fall back to the training EMA inside route()

    std::vector<EvalRow> rows;
    for (double target : bpp16_targets) {
        RouterState state = router;
        state.beta = beta_from_bpp16(target, kNMax, fsq.exact_bits());

        EvalRow row;
        row.target_bpp16 = target;
        row.beta = state.beta;
        double seg_n = 0;
        std::vector<double> segs, lengths;
        NfeCounter nfe;
        long search_probes = 0;
        for (std::size_t i = 0; i < eval_set.size(); ++i) {
            nfe.encoder += 1;
            nfe.decoder += 1;  // the shared router pass
            int n_x = route(state, base[i].nll, denom);
            auto mask = build_mask(base[i].scores, n_x);
            auto trace = forward_adaptive(eval_set[i], mask, params, fsq,
                                          /*surrogate=*/false, &nfe,
                                          /*count_encoder=*/false);
            row.mse += trace.loss;
            row.realized_bpp16 += bpp16(n_x, kNMax, fsq.exact_bits(), true);
            row.mean_n_x += n_x;
            segs.push_back(eval_set[i].segment_count);
            lengths.push_back(n_x);
            seg_n += 1;

            // threshold-search baseline cost for the same achieved loss
            auto probe = [&](int n) {
                auto m = build_mask(base[i].scores, std::max(1, n));
                return forward_adaptive(eval_set[i], m, params, fsq).loss;
            };
            search_probes +=
                route_by_search(trace.loss, probe, kNMax, /*block=*/1).extra_nfes;
        }
        const double count = static_cast<double>(eval_set.size());
        row.mse /= count;
        row.realized_bpp16 /= count;
        row.mean_n_x /= count;
        row.psnr = row.mse == 0.0 ? kPsnrInfinite : 10.0 * std::log10(4.0 / row.mse);
        row.spearman = eval_set.size() > 1 ? spearman(segs, lengths) : 0.0;
        row.nfe_encoder = nfe.encoder / count;
        row.nfe_decoder = nfe.decoder / count;
        row.search_probes = static_cast<double>(search_probes) / count;
        rows.push_back(row);
    }
    return rows;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("write_eval_csv: cannot open " + path);
    file << "target_bpp16,beta,realized_bpp16,mean_n_x,mse,psnr,spearman,"
            "nfe_encoder,nfe_decoder,search_probes\n";
    file.precision(17);
    for (const auto& r : rows)
        file << r.target_bpp16 << ',' << r.beta << ',' << r.realized_bpp16 << ','
             << r.mean_n_x << ',' << r.mse << ',' << r.psnr << ',' << r.spearman
             << ',' << r.nfe_encoder << ',' << r.nfe_decoder << ','
             << r.search_probes << '\n';
    if (!file) throw IoError("write_eval_csv: write failed for " + path);
}

std::vector<int> oracle_grid() { return {1, 2, 4, 6, 8, 10, 12, 14, 16}; }

std::vector<int> oracle_allocate(const std::vector<std::vector<double>>& curves,
                                 const std::vector<int>& grid, double budget_mean) {
    if (grid.empty() || curves.empty())
        throw ValidationError("oracle_allocate: empty input");
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (grid[g] <= grid[g - 1])
            throw ValidationError("oracle_allocate: grid must be strictly increasing");
    if (grid.front() < 1)
        throw ValidationError("oracle_allocate: grid values must be >= 1");
    for (const auto& c : curves)
        if (c.size() != grid.size())
            throw ValidationError("oracle_allocate: curve does not match the grid");
    if (budget_mean < grid.front())
        throw ValidationError("oracle_allocate: budget below the minimal length");

    const std::size_t n = curves.size();
    // Concavify each curve: lower convex hull over (tokens, loss) makes the
    // per-token marginal gains nonincreasing, so greedy is exact for the
    // relaxed problem.
    std::vector<std::vector<int>> hull(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& h = hull[i];
        for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
            while (h.size() >= 2) {
                int a = h[h.size() - 2], b = h.back();
                double s1 = (curves[i][b] - curves[i][a]) / (grid[b] - grid[a]);
                double s2 = (curves[i][g] - curves[i][b]) / (grid[g] - grid[b]);
                if (s2 < s1 - 1e-15)
                    h.pop_back();
                else
                    break;
            }
            h.push_back(g);
        }
    }

    std::vector<int> pos(n, 0);  // index into each hull
    long remaining = static_cast<long>(std::floor(budget_mean * n)) -
                     static_cast<long>(n) * grid.front();

    struct Move {
        double rate;  // loss reduction per token
        std::size_t sample;
        bool operator<(const Move& o) const { return rate < o.rate; }
    };
    std::priority_queue<Move> moves;
    auto push_next = [&](std::size_t i) {
        if (pos[i] + 1 >= static_cast<int>(hull[i].size())) return;
        int a = hull[i][pos[i]], b = hull[i][pos[i] + 1];
        double gain = curves[i][a] - curves[i][b];
        if (gain <= 0.0) return;  // rates only fall from here on the hull
        moves.push({gain / (grid[b] - grid[a]), i});
    };
    for (std::size_t i = 0; i < n; ++i) push_next(i);

    while (remaining > 0 && !moves.empty()) {
        auto [rate, i] = moves.top();
        moves.pop();
        int a = hull[i][pos[i]], b = hull[i][pos[i] + 1];
        int cost = grid[b] - grid[a];
        if (cost > remaining) continue;  // unaffordable; cheaper moves may fit
        remaining -= cost;
        ++pos[i];
        push_next(i);
    }

    std::vector<int> allocation(n);
    for (std::size_t i = 0; i < n; ++i) allocation[i] = grid[hull[i][pos[i]]];
    return allocation;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw ValidationError("spearman: need two equal-length series");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            double avg = 0.5 * (i + j) + 1.0;  // tie-averaged 1-based rank
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;  // a constant series carries no ranking
    return cov / std::sqrt(va * vb);
}

TokenizeResult adaptive_tokenize(const ToySignal& signal, const ModelParams& params,
                                 const RouterState& router, const FsqConfig& fsq,
                                 std::optional<double> denominator) {
    TokenizeResult res;
    auto ff = forward_full(signal, params, fsq, &res.nfe);
    res.nll = ff.nll_proxy;
    res.n_x = route(router, ff.nll_proxy, denominator);
    auto scores = per_token_scores(ff.per_element_sq_errors, patch_map(), kTokens);
    auto mask = build_mask(scores, res.n_x);
    auto trace = forward_adaptive(signal, mask, params, fsq, /*surrogate=*/false,
                                  &res.nfe, /*count_encoder=*/false);
    res.recon = trace.recon;
    res.mse = trace.loss;
    res.stream.config = fsq;
    res.stream.mask = mask;
    for (int t = 0; t < kTokens; ++t)
        if (mask.kept[t]) res.stream.codes.push_back(quantize(trace.mixed[t], fsq));
    return res;
}

std::vector<double> adaptive_detokenize(const TokenStream& stream,
                                        const ModelParams& params) {
    std::vector<std::vector<double>> rows;
    rows.reserve(stream.codes.size());
    for (const auto& code : stream.codes)
        rows.push_back(dequantize(code, stream.config));
    return decode_adaptive(rows, stream.mask, params);
}

void save_dataset(const std::string& path, const std::vector<ToySignal>& signals) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) throw IoError("save_dataset: cannot open " + path);
    for (const auto& s : signals) {
        nlohmann::json j = {
            {"seed", s.seed},
            {"segment_count", s.segment_count},
            {"values", s.values},
        };
        file << j.dump() << '\n';
    }
    if (!file) throw IoError("save_dataset: write failed for " + path);
}

std::vector<ToySignal> load_dataset(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw IoError("load_dataset: cannot open " + path);
    std::vector<ToySignal> signals;
    std::string line;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ToySignal s;
        s.seed = j.value("seed", 0ull);
        s.segment_count = j.at("segment_count").get<int>();
        s.values = j.at("values").get<std::vector<double>>();
        if (s.values.size() != kSignalLength)
            throw ValidationError("load_dataset: signal must have 64 samples");
        signals.push_back(std::move(s));
    }
    return signals;
}

std::vector<ToySignal> make_eval_set(std::uint64_t seed, int count,
                                     double noise_sigma) {
    if (count < 1) throw ValidationError("make_eval_set: count must be positive");
    std::vector<ToySignal> set;
    set.reserve(count);
    for (int i = 0; i < count; ++i)
        set.push_back(sample_signal(mix_seed(seed ^ 0xE7A15E7ull, i + 1), noise_sigma));
    return set;
}

}  // namespace itk
