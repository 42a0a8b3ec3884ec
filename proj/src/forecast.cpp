#include "gpa/forecast.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "gpa/errors.hpp"

namespace gpa {

ForecasterModel init_forecaster(const ForecasterArchitecture& arch, std::uint64_t seed) {
    ForecasterModel m;
    m.arch = arch;
    Rng rng(derive_seed(seed, "forecaster_init"));
    const DType dt = arch.dtype;
    const std::size_t h = arch.hidden;
    const double s = 0.1;
    m.params.push_back(Var::param(Tensor::randn({kForecastBlock, 4 * h}, rng, s, dt))); // w_ih
    m.params.push_back(Var::param(Tensor::randn({h, 4 * h}, rng, s, dt)));              // w_hh
    m.params.push_back(Var::param(Tensor::zeros({4 * h}, dt)));                         // b_ih
    m.params.push_back(Var::param(Tensor::zeros({4 * h}, dt)));                         // b_hh
    m.params.push_back(Var::param(Tensor::randn({h, kForecastBlock}, rng, s, dt)));     // w_out
    m.params.push_back(Var::param(Tensor::zeros({kForecastBlock}, dt)));                // b_out
    m.opt.lr = 1e-4;
    return m;
}

LstmStepOut lstm_step(const ForecasterModel& model, const Var& x, const Var& h, const Var& c) {
    const std::size_t hs = model.arch.hidden;
    Var gates = add_bias(add_bias(add(matmul(x, model.params[0]), matmul(h, model.params[1])),
                                  model.params[2]),
                         model.params[3]);
    Var i = sigmoid_op(slice_cols(gates, 0, hs));
    Var f = sigmoid_op(slice_cols(gates, hs, 2 * hs));
    Var g = tanh_op(slice_cols(gates, 2 * hs, 3 * hs));
    Var o = sigmoid_op(slice_cols(gates, 3 * hs, 4 * hs));
    Var c_next = add(mul(f, c), mul(i, g));
    Var h_next = mul(o, tanh_op(c_next));
    return {h_next, c_next};
}

Var forecast_head(const ForecasterModel& model, const Var& h) {
    return tanh_op(add_bias(matmul(h, model.params[4]), model.params[5]));
}

namespace {

// per-sample central moment of order k along the 24-point axis -> [N,1]
Var block_moment(const Var& x, const Var& centered, int order) {
    if (order == 1) return row_mean(x);
    Var p = centered;
    for (int i = 1; i < order; ++i) p = mul(p, centered);
    return row_mean(p);
}

Var zero_state(std::size_t n, std::size_t h, DType dt) {
    return Var::constant(Tensor::zeros({n, h}, dt));
}

Var predict_block(const ForecasterModel& model, const Var& x, Var& h, Var& c) {
    LstmStepOut s = lstm_step(model, x, h, c);
    h = s.h;
    c = s.c;
    return forecast_head(model, h);
}

} // namespace

Var forecast_loss(const Var& pred, const Var& truth, const ForecastTrainConfig& config) {
    Var diff = sub(pred, truth);
    Var loss = mean_all(mul(diff, diff));
    Var pc = sub(pred, row_broadcast(row_mean(pred), kForecastBlock));
    Var tc = sub(truth, row_broadcast(row_mean(truth), kForecastBlock));
    for (int k = 0; k < 4; ++k) {
        if (config.stat_weights[k] == 0.0) continue;
        Var sp = block_moment(pred, pc, k + 1);
        Var st = block_moment(truth, tc, k + 1);
        loss = add(loss, scale(mean_all(abs_op(sub(sp, st))), config.stat_weights[k]));
    }
    return loss;
}

ForecasterModel train_forecaster(const std::vector<Curve>& curves,
                                 const ForecastTrainConfig& config,
                                 const ForecasterArchitecture& arch) {
    if (curves.empty()) throw DataError("train_forecaster: no curves");
    ForecasterModel model = init_forecaster(arch, config.seed);
    model.opt.lr = config.lr;

    // (curve, offset) samples, windows of 48 at stride 1
    std::vector<std::pair<std::size_t, std::size_t>> samples;
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const std::size_t len = curves[ci].values.size();
        if (len < 2 * kForecastBlock) continue;
        for (std::size_t o = 0; o + 2 * kForecastBlock <= len; ++o) samples.emplace_back(ci, o);
    }
    if (samples.empty()) throw DataError("train_forecaster: curves shorter than 48 points");

    Rng rng(derive_seed(config.seed, "forecaster_train"));
    const DType dt = arch.dtype;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(samples);
        for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
            const std::size_t end = std::min(samples.size(), start + config.batch_size);
            const std::size_t n = end - start;
            Tensor xin({n, kForecastBlock}, dt), tgt({n, kForecastBlock}, dt);
            for (std::size_t i = 0; i < n; ++i) {
                const auto [ci, o] = samples[start + i];
                for (std::size_t j = 0; j < kForecastBlock; ++j) {
                    xin[i * kForecastBlock + j] = curves[ci].values[o + j];
                    tgt[i * kForecastBlock + j] = curves[ci].values[o + kForecastBlock + j];
                }
            }
            xin.quantize();
            tgt.quantize();
            Var h = zero_state(n, arch.hidden, dt);
            Var c = zero_state(n, arch.hidden, dt);
            Var pred = predict_block(model, Var::constant(std::move(xin)), h, c);
            Var loss = forecast_loss(pred, Var::constant(std::move(tgt)), config);
            if (has_nan(loss.value()))
                throw NumericError("train_forecaster: NaN loss at epoch " + std::to_string(epoch) +
                                   " sample offset " + std::to_string(start));
            std::vector<Tensor> gs;
            for (const auto& g : grad(loss, model.params)) gs.push_back(g.value());
            adam_step(model.opt, model.params, gs);
        }
    }
    return model;
}

double evaluate_forecaster(const ForecasterModel& model, const std::vector<Curve>& test_curves) {
    double total = 0.0;
    std::size_t count = 0;
    const DType dt = model.arch.dtype;
    ForecasterModel view;
    view.arch = model.arch;
    for (const auto& p : model.params) view.params.push_back(detach(p));
    for (const auto& curve : test_curves) {
        const std::size_t blocks = curve.values.size() / kForecastBlock;
        if (blocks < 2) continue;
        Var h = zero_state(1, model.arch.hidden, dt);
        Var c = zero_state(1, model.arch.hidden, dt);
        for (std::size_t b = 0; b + 1 < blocks; ++b) {
            Tensor xin({1, kForecastBlock}, dt);
            for (std::size_t j = 0; j < kForecastBlock; ++j)
                xin[j] = curve.values[b * kForecastBlock + j];
            xin.quantize();
            Var pred = predict_block(view, Var::constant(std::move(xin)), h, c);
            double mse = 0.0;
            for (std::size_t j = 0; j < kForecastBlock; ++j) {
                const double d = pred.value()[j] - curve.values[(b + 1) * kForecastBlock + j];
                mse += d * d;
            }
            total += mse / static_cast<double>(kForecastBlock);
            ++count;
        }
    }
    if (count == 0) throw DataError("evaluate_forecaster: no complete prediction window");
    return total / static_cast<double>(count);
}

double lstm_score(const std::vector<Curve>& member_curves,
                  const std::vector<Curve>& artificial_curves,
                  const std::vector<Curve>& test_curves, const ForecastTrainConfig& config,
                  const ForecasterArchitecture& arch) {
    ForecasterModel fake_model = train_forecaster(artificial_curves, config, arch);
    ForecasterModel real_model = train_forecaster(member_curves, config, arch);
    return evaluate_forecaster(fake_model, test_curves) -
           evaluate_forecaster(real_model, test_curves);
}

void write_forecast_csv(const std::string& path, const ForecasterModel& model,
                        const Curve& curve) {
    std::ofstream os(path);
    if (!os) throw DataError("write_forecast_csv: cannot open " + path);
    os << "t,truth,prediction\n";
    os.precision(17);
    const DType dt = model.arch.dtype;
    ForecasterModel view;
    view.arch = model.arch;
    for (const auto& p : model.params) view.params.push_back(detach(p));
    const std::size_t blocks = curve.values.size() / kForecastBlock;
    Var h = zero_state(1, model.arch.hidden, dt);
    Var c = zero_state(1, model.arch.hidden, dt);
    for (std::size_t b = 0; b + 1 < blocks; ++b) {
        Tensor xin({1, kForecastBlock}, dt);
        for (std::size_t j = 0; j < kForecastBlock; ++j)
            xin[j] = curve.values[b * kForecastBlock + j];
        xin.quantize();
        Var pred = predict_block(view, Var::constant(std::move(xin)), h, c);
        for (std::size_t j = 0; j < kForecastBlock; ++j) {
            const std::size_t t = (b + 1) * kForecastBlock + j;
            os << t << ',' << curve.values[t] << ',' << pred.value()[j] << '\n';
        }
    }
}

} // namespace gpa
