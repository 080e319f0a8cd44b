// SPDX-License-Identifier: Apache-2.0

#include "core/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/error.hpp"
#include "core/log.hpp"

namespace mdap {

namespace {

void check_targets(const ForwardTrace& trace, const Matrix& target_s, const Matrix& target_t) {
    if (!trace.recon[0].same_shape(target_s) || !trace.recon[1].same_shape(target_t)) {
        throw ShapeError("targets " + shape_string(target_s) + " / " + shape_string(target_t) +
                         " do not match reconstructions " + shape_string(trace.recon[0]) + " / " +
                         shape_string(trace.recon[1]));
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void add_col_sums(Matrix& bias, const Matrix& grad, std::size_t offset = 0) {
    for (std::size_t r = 0; r < grad.rows(); ++r) {
        const auto row = grad.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            bias(0, offset + c) += row[c];
        }
    }
}

void add_into(Matrix& dst, const Matrix& src) {
    auto d = dst.values();
    const auto s = src.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

/// grad ⊙ (1 - act²) for tanh activations
Matrix tanh_backward(const Matrix& act, const Matrix& grad) {
    Matrix out = grad;
    auto o = out.values();
    const auto a = act.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] *= 1.0 - a[i] * a[i];
    }
    return out;
}

} // namespace

LossBreakdown loss(const ForwardTrace& trace, const Matrix& target_s, const Matrix& target_t, double lambda) {
    check_targets(trace, target_s, target_t);
    LossBreakdown out;
    const std::array<const Matrix*, 2> targets = {&target_s, &target_t};
    std::array<double*, 2> sinks = {&out.rec_s, &out.rec_t};
    for (std::size_t d = 0; d < 2; ++d) {
        const auto r = trace.recon[d].values();
        const auto t = targets[d]->values();
        double acc = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double diff = t[i] - r[i];
            acc += diff * diff;
        }
        *sinks[d] = acc;
    }
    out.orth = lambda * dot(trace.gates[0], trace.gates[1]);
    out.total = out.rec_s + out.rec_t + out.orth;
    return out;
}

GradientSet backward(const ForwardTrace& trace, const Matrix& target_s, const Matrix& target_t,
                     const ModelParams& params, const ModelConfig& config) {
    check_targets(trace, target_s, target_t);
    if (trace.ablation != config.ablation || trace.views() != config.effective_views() ||
        trace.input.cols() != params.total_items() || trace.enc_projection.cols() != params.enc_w1.cols()) {
        throw StateError("backward: trace was not produced by these parameters and config");
    }
    params.check_shapes(config);

    GradientSet g = ModelParams::zeros_like(params);
    const std::size_t k = trace.views();
    const std::size_t batch = trace.batch();
    const std::array<const Matrix*, 2> targets = {&target_s, &target_t};

    // decoder, per domain slice
    std::array<Matrix, 2> dz;
    for (Domain d : kDomains) {
        const std::size_t di = index_of(d);
        Matrix d_out = trace.recon[di];
        {
            auto o = d_out.values();
            const auto t = targets[di]->values();
            for (std::size_t i = 0; i < o.size(); ++i) {
                o[i] = 2.0 * (o[i] - t[i]);
            }
        }
        const std::size_t offset = d == Domain::source ? 0 : params.items_s;
        const std::size_t width = d_out.cols();
        const Matrix& hid = trace.dec_hidden[di];
        Matrix d_hid(batch, params.dec_w2.rows());
        for (std::size_t b = 0; b < batch; ++b) {
            const auto go = d_out.row(b);
            for (std::size_t h = 0; h < hid.cols(); ++h) {
                const double* w = params.dec_w2.row(h).data() + offset;
                double* gw = g.dec_w2.row(h).data() + offset;
                const double a = hid(b, h);
                double acc = 0.0;
                for (std::size_t c = 0; c < width; ++c) {
                    gw[c] += a * go[c];
                    acc += go[c] * w[c];
                }
                d_hid(b, h) = acc;
            }
        }
        add_col_sums(g.dec_b2, d_out, offset);
        const Matrix d_pre = tanh_backward(hid, d_hid);
        add_into(g.dec_w1, matmul_tn(trace.combined[di], d_pre));
        add_col_sums(g.dec_b1, d_pre);
        dz[di] = matmul_nt(d_pre, params.dec_w1);
    }

    // gates
    std::array<std::vector<double>, 2> d_gate;
    for (std::size_t di = 0; di < 2; ++di) {
        d_gate[di].resize(k);
        for (std::size_t i = 0; i < k; ++i) {
            d_gate[di][i] = dot(dz[di].values(), trace.view_embs[i].values());
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        d_gate[0][i] += config.lambda * trace.gates[1][i];
        d_gate[1][i] += config.lambda * trace.gates[0][i];
    }
    if (config.ablation != Ablation::no_gate) {
        for (std::size_t di = 0; di < 2; ++di) {
            const auto& w = trace.gates[di];
            const double wd = dot(w, d_gate[di]);
            for (std::size_t i = 0; i < k; ++i) {
                g.gate_table(di, i) = w[i] * (d_gate[di][i] - wd);
            }
        }
    }

    // encoder, one pass per view; the first layer sees assignment-scaled rows
    Matrix d_projection(batch, params.enc_w1.cols());
    Matrix d_assign(batch, k);
    for (std::size_t i = 0; i < k; ++i) {
        Matrix d_emb(batch, params.enc_w2.cols());
        {
            auto de = d_emb.values();
            const auto zs = dz[0].values();
            const auto zt = dz[1].values();
            const double ws = trace.gates[0][i];
            const double wt = trace.gates[1][i];
            for (std::size_t j = 0; j < de.size(); ++j) {
                de[j] = ws * zs[j] + wt * zt[j];
            }
        }
        const Matrix& hid = trace.enc_hidden[i];
        add_into(g.enc_w2, matmul_tn(hid, d_emb));
        add_col_sums(g.enc_b2, d_emb);
        const Matrix d_pre = tanh_backward(hid, matmul_nt(d_emb, params.enc_w2));
        add_col_sums(g.enc_b1, d_pre);
        for (std::size_t b = 0; b < batch; ++b) {
            const double s = trace.assignment(b, i);
            const auto dp = d_pre.row(b);
            auto dst = d_projection.row(b);
            for (std::size_t h = 0; h < dp.size(); ++h) {
                dst[h] += s * dp[h];
            }
            d_assign(b, i) = dot(dp, trace.enc_projection.row(b));
        }
    }
    g.enc_w1 = matmul_tn(trace.dropped, d_projection);

    // logit path
    if (config.ablation != Ablation::single_view) {
        const Matrix d_logits = softmax_rows_backward(trace.assignment, d_assign, trace.tau);
        const Matrix d_core_norm = matmul_tn(d_logits, trace.projected);
        const Matrix d_projected = matmul(d_logits, trace.core_norm);
        const Matrix d_item_norm = matmul_tn(trace.dropped, d_projected);
        g.core_emb = row_l2_normalize_backward(params.core_emb, trace.core_norm, d_core_norm);
        g.item_emb = row_l2_normalize_backward(params.item_emb, trace.item_norm, d_item_norm);
    }
    return g;
}

// ---- training loop -----------------------------------------------------------

void TrainConfig::validate() const {
    if (epochs_max < 1 || patience < 1 || batch_users < 1 || eval_k < 1) {
        throw ParameterError("epochs, patience, batch size and cutoff must all be at least 1");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ParameterError("learning rate must be positive");
    }
    model.validate();
}

TrainResult train(const InteractionDataset& dataset, const TrainConfig& config, const Evaluator& evaluator) {
    config.validate();
    if (dataset.num_users() == 0 || dataset.num_items(Domain::source) == 0 || dataset.num_items(Domain::target) == 0) {
        throw DataError("cannot train on an empty dataset");
    }
    Rng rng(config.seed);
    ModelParams params =
        ModelParams::initialize(config.model, dataset.num_items(Domain::source), dataset.num_items(Domain::target), rng);
    std::array<AdamState, kParamFieldCount> adam;
    {
        const auto fs = params.fields();
        for (std::size_t i = 0; i < kParamFieldCount; ++i) {
            adam[i] = AdamState::zeros_like(*fs[i]);
        }
    }
    const AdamHyper hyper{config.lr};
    const Evaluator validate_fn = evaluator ? evaluator : Evaluator([&](const ModelParams& p, const ModelConfig& mc) {
        return evaluate(p, mc, dataset, Split::valid, config.eval_k, config.batch_users).domains;
    });

    const Matrix train_rows = densify_concat(dataset, Split::train);
    const std::size_t items_s = dataset.num_items(Domain::source);

    TrainResult result;
    result.params = params;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t stall = 0;
    std::uint64_t step = 0;
    std::vector<std::size_t> order(dataset.num_users());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.epochs_max; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t start = 0; start < order.size(); start += config.batch_users) {
            const std::size_t end = std::min(order.size(), start + config.batch_users);
            Matrix batch(end - start, train_rows.cols());
            for (std::size_t r = start; r < end; ++r) {
                const auto src = train_rows.row(order[r]);
                std::copy(src.begin(), src.end(), batch.row(r - start).begin());
            }
            const Matrix target_s = domain_slice(batch, items_s, Domain::source);
            const Matrix target_t = domain_slice(batch, items_s, Domain::target);

            GradientSet grads;
            LossBreakdown lb;
            try {
                const ForwardTrace trace = forward(params, config.model, batch, rng, true);
                lb = loss(trace, target_s, target_t, config.model.lambda);
                if (!std::isfinite(lb.total)) {
                    throw NumericError("loss is not finite");
                }
                grads = backward(trace, target_s, target_t, params, config.model);
            } catch (const NumericError& e) {
                throw TrainingError(epoch, "training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
            }
            rec.loss.total += lb.total;
            rec.loss.rec_s += lb.rec_s;
            rec.loss.rec_t += lb.rec_t;
            rec.loss.orth += lb.orth;

            ++step;
            auto ps = params.fields();
            const auto gs = grads.fields();
            for (std::size_t i = 0; i < kParamFieldCount; ++i) {
                adam_step(*ps[i], *gs[i], adam[i], step, hyper);
            }
        }
        for (const Matrix* m : params.fields()) {
            if (!all_finite(*m)) {
                throw TrainingError(epoch, "training diverged in epoch " + std::to_string(epoch) +
                                               ": parameters are not finite");
            }
        }

        std::array<DomainMetrics, 2> val;
        try {
            val = validate_fn(params, config.model);
        } catch (const NumericError& e) {
            throw TrainingError(epoch, "training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }
        for (std::size_t di = 0; di < 2; ++di) {
            rec.val_recall[di] = val[di].recall;
            rec.val_ndcg[di] = val[di].ndcg;
            rec.gates[di] = gate_weights(params, kDomains[di], config.model.ablation);
        }
        const double crit = rec.criterion();
        result.log.epochs.push_back(rec);

        std::ostringstream msg;
        msg << "epoch " << epoch << " loss " << rec.loss.total << " val ndcg s=" << rec.val_ndcg[0]
            << " t=" << rec.val_ndcg[1];
        log_message(LogLevel::debug, msg.str());

        if (crit > best) {
            best = crit;
            stall = 0;
            result.params = params;
            result.log.best_epoch = epoch;
        } else if (++stall >= config.patience) {
            log_info("early stop after epoch " + std::to_string(epoch) + ", best epoch " +
                     std::to_string(result.log.best_epoch));
            break;
        }
    }
    return result;
}

// ---- log serialization -------------------------------------------------------

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& e : epochs) {
        nlohmann::ordered_json j;
        j["epoch"] = e.epoch;
        j["loss_total"] = e.loss.total;
        j["loss_rec_s"] = e.loss.rec_s;
        j["loss_rec_t"] = e.loss.rec_t;
        j["loss_orth"] = e.loss.orth;
        j["val_recall20_s"] = e.val_recall[0];
        j["val_recall20_t"] = e.val_recall[1];
        j["val_ndcg20_s"] = e.val_ndcg[0];
        j["val_ndcg20_t"] = e.val_ndcg[1];
        j["gate_s"] = e.gates[0];
        j["gate_t"] = e.gates[1];
        j["best"] = e.epoch == best_epoch;
        out += j.dump();
        out += '\n';
    }
    return out;
}

TrainLog TrainLog::from_jsonl(const std::string& text) {
    TrainLog log;
    std::istringstream in(text);
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto j = nlohmann::json::parse(line);
            EpochRecord e;
            e.epoch = j.at("epoch").get<std::size_t>();
            e.loss.total = j.at("loss_total").get<double>();
            e.loss.rec_s = j.at("loss_rec_s").get<double>();
            e.loss.rec_t = j.at("loss_rec_t").get<double>();
            e.loss.orth = j.at("loss_orth").get<double>();
            e.val_recall = {j.at("val_recall20_s").get<double>(), j.at("val_recall20_t").get<double>()};
            e.val_ndcg = {j.at("val_ndcg20_s").get<double>(), j.at("val_ndcg20_t").get<double>()};
            e.gates[0] = j.value("gate_s", std::vector<double>{});
            e.gates[1] = j.value("gate_t", std::vector<double>{});
            if (j.value("best", false)) {
                log.best_epoch = e.epoch;
            }
            log.epochs.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed training log: ") + e.what());
    }
    return log;
}

// ---- ablation ----------------------------------------------------------------

AblationReport run_ablation(const InteractionDataset& dataset, const TrainConfig& config) {
    AblationReport report;
    report.seed = config.seed;
    report.cutoff = config.eval_k;
    for (Ablation variant : kAblations) {
        TrainConfig arm = config;
        arm.model.ablation = variant;
        log_info("training variant " + std::string(ablation_label(variant)));
        TrainResult trained = train(dataset, arm);
        AblationRow row;
        row.variant = variant;
        row.test = evaluate(trained.params, arm.model, dataset, Split::test, arm.eval_k, arm.batch_users).domains;
        row.log = std::move(trained.log);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string AblationReport::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["cutoff"] = cutoff;
    j["split"] = "test";
    auto rows_json = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json rj;
        rj["variant"] = ablation_label(r.variant);
        rj["ablation"] = ablation_name(r.variant);
        rj["seed"] = seed;
        rj["best_epoch"] = r.log.best_epoch;
        for (Domain d : kDomains) {
            const auto& m = r.test[index_of(d)];
            rj["domains"][domain_tag(d)] = {{"recall", m.recall}, {"ndcg", m.ndcg}, {"n_users_evaluated", m.n_users}};
        }
        rows_json.push_back(std::move(rj));
    }
    j["rows"] = std::move(rows_json);
    return j.dump(2) + "\n";
}

AblationReport AblationReport::from_json(const std::string& text) {
    AblationReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.seed = j.at("seed").get<std::uint64_t>();
        r.cutoff = j.at("cutoff").get<std::size_t>();
        for (const auto& rj : j.at("rows")) {
            AblationRow row;
            row.variant = parse_ablation(rj.at("ablation").get<std::string>());
            row.log.best_epoch = rj.value("best_epoch", std::size_t{0});
            for (Domain d : kDomains) {
                const auto& m = rj.at("domains").at(domain_tag(d));
                auto& dst = row.test[index_of(d)];
                dst.recall = m.at("recall").get<double>();
                dst.ndcg = m.at("ndcg").get<double>();
                dst.n_users = m.at("n_users_evaluated").get<std::size_t>();
            }
            r.rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed ablation report: ") + e.what());
    }
    return r;
}

std::string AblationReport::to_text() const {
    std::ostringstream os;
    os << "seed=" << seed << " split=test cutoff=" << cutoff << "\n";
    os << std::left << std::setw(8) << "domain" << std::setw(8) << "metric";
    for (const auto& r : rows) {
        os << std::right << std::setw(10) << ablation_label(r.variant);
    }
    os << "\n" << std::fixed << std::setprecision(4);
    for (Domain d : kDomains) {
        for (int metric = 0; metric < 2; ++metric) {
            os << std::left << std::setw(8) << domain_tag(d) << std::setw(8) << (metric == 0 ? "Recall" : "NDCG");
            for (const auto& r : rows) {
                const auto& m = r.test[index_of(d)];
                os << std::right << std::setw(10) << (metric == 0 ? m.recall : m.ndcg);
            }
            os << "\n";
        }
    }
    return os.str();
}

} // namespace mdap
