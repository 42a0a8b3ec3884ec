#pragma once

#include <string>
#include <vector>

#include "gpa/adam.hpp"
#include "gpa/autodiff.hpp"
#include "gpa/curves.hpp"

namespace gpa {

inline constexpr std::size_t kForecastBlock = 24; // points in, points out

// Single-cell LSTM forecaster: one step consumes a block of 24 normalized
// values and the head (linear + tanh) emits the next 24. Hidden sizes: 11 at
// desk scale (~2k parameters), 48 at paper scale (15384 parameters).
struct ForecasterArchitecture {
    std::size_t hidden = 11;
    DType dtype = DType::F64;

    static ForecasterArchitecture desk() { return {}; }
    static ForecasterArchitecture paper_scale() { return {48, DType::F64}; }

    std::size_t param_count() const {
        return 4 * hidden * (kForecastBlock + hidden) + 8 * hidden // cell, double biases
               + hidden * kForecastBlock + kForecastBlock;         // output head
    }
};

struct ForecastTrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 50;
    double lr = 1e-4;
    // l1 weights for |stat(pred) - stat(truth)|: mean, 2nd, 3rd, 4th
    // centralized moment of each 24-point block
    double stat_weights[4] = {1.0, 1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
};

struct ForecasterModel {
    ForecasterArchitecture arch;
    std::vector<Var> params; // w_ih, w_hh, b_ih, b_hh, w_out, b_out
    AdamState opt;
};

ForecasterModel init_forecaster(const ForecasterArchitecture& arch, std::uint64_t seed);

// One LSTM step: x [N,24], h/c [N,H] -> (h', c'); prediction head on h'.
struct LstmStepOut {
    Var h, c;
};
LstmStepOut lstm_step(const ForecasterModel& model, const Var& x, const Var& h, const Var& c);
Var forecast_head(const ForecasterModel& model, const Var& h);

// Training loss on one batch: MSE plus weighted l1 differences of block
// statistics (mean and 2nd/3rd/4th central moments).
Var forecast_loss(const Var& pred, const Var& truth, const ForecastTrainConfig& config);

// Windows slide by one step during training; each sample is an independent
// (24 in, 24 out) pair started from a zero state.
ForecasterModel train_forecaster(const std::vector<Curve>& curves,
                                 const ForecastTrainConfig& config,
                                 const ForecasterArchitecture& arch = ForecasterArchitecture::desk());

// Mean MSE over non-overlapping 24-point prediction windows; the cell state
// carries across the blocks of each curve.
double evaluate_forecaster(const ForecasterModel& model, const std::vector<Curve>& test_curves);

// MSE(model trained on artificial) - MSE(model trained on natural), both on
// the same natural test set. Negative values are legitimate.
double lstm_score(const std::vector<Curve>& member_curves,
                  const std::vector<Curve>& artificial_curves,
                  const std::vector<Curve>& test_curves, const ForecastTrainConfig& config,
                  const ForecasterArchitecture& arch = ForecasterArchitecture::desk());

// (t, truth, prediction) rows for external plotting.
void write_forecast_csv(const std::string& path, const ForecasterModel& model,
                        const Curve& curve);

} // namespace gpa
