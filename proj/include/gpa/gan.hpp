#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gpa/adam.hpp"
#include "gpa/autodiff.hpp"
#include "gpa/curves.hpp"
#include "gpa/spectral.hpp"

namespace gpa {

// Training scenarios: generator LR is always 1e-4; `DiffLr` lowers the
// discriminator LR to 1e-5, `Regularized` adds the gradient-norm penalty
// with eta = 1e-2.
enum class Scenario { DiffLr, SameLr, Regularized };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

// Generator: linear(latent -> C0*base_len), ReLU, then transposed-conv
// stages (stride 2) each doubling the length, ReLU between and tanh at the
// output. Discriminator: stride-2 conv stages, flatten, two linear layers,
// ReLU hidden and sigmoid output, spectral normalization on every layer.
struct GanArchitecture {
    std::size_t latent_dim = 8;
    std::size_t curve_len = 96;
    std::size_t base_len = 12;
    std::vector<std::size_t> gen_channels = {48, 32, 24, 1}; // C0 .. 1
    std::vector<std::size_t> disc_channels = {16, 32, 48};   // after the input channel
    std::size_t disc_hidden = 48;
    int kernel = 4; // stride 2, padding (kernel-2)/2
    DType dtype = DType::F64;

    static GanArchitecture desk();
    static GanArchitecture paper_scale();

    void validate() const;
    std::size_t gen_param_count() const;
    std::size_t disc_param_count() const;
};

struct TrainConfig {
    std::size_t epochs = 140;
    std::size_t batch_size = 20;
    double lr_generator = 1e-4;
    double lr_discriminator = 1e-4;
    double eta = 0.0;
    std::uint64_t seed = 0;
    Scenario scenario = Scenario::SameLr;
    std::size_t checkpoint_every = 0; // epochs between checkpoints, 0 = off
    std::string checkpoint_dir;

    static TrainConfig preset(Scenario s);
};

struct GanModel {
    GanArchitecture arch;
    std::vector<Var> gen_params, disc_params;
    std::vector<std::string> gen_names, disc_names;
    std::vector<SpectralState> sn_states; // one per discriminator layer
    AdamState opt_g, opt_d;
    long epoch = 0;
    std::string fingerprint; // hash of the member subset's household ids
    double norm_cap = 1.0;   // normalization cap, kept for denormalizing output
    std::uint64_t init_seed = 0;
    TrainConfig config;
};

struct LossLogRow {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double grad_norm_penalty = 0.0;
};

GanModel init_gan(const GanArchitecture& arch, std::uint64_t seed);

// One power-iteration pass over all discriminator layers (persistent u/v).
void update_spectral_state(GanModel& model, int iters = 1);

Var curves_to_batch(const std::vector<Curve>& curves, DType dt = DType::F64);

Var generator_forward(const GanModel& model, const Var& z);
Var discriminator_forward(const GanModel& model, const Var& x);

std::vector<Curve> generate(const GanModel& model, std::size_t n, std::uint64_t seed);
std::vector<double> discriminate(const GanModel& model, const std::vector<Curve>& curves);

// Mean cross-entropy of the real batch against label 1 plus the fake batch
// against label 0.
Var discriminator_loss(const GanModel& model, const Var& real_batch, const Var& fake_batch);

// Eq.-style regularized objective: L_discr - eta * ||grad_theta L_discr||_2,
// with the norm term on the tape so its own gradient flows. eta = 0 returns
// discriminator_loss itself.
Var regularized_loss(const GanModel& model, const Var& real_batch, const Var& fake_batch,
                     double eta);

// Central finite-difference estimate of ||grad_theta L_discr||_2, for
// cross-checking the tape-based penalty on tiny models.
double gradnorm_fd(const GanModel& model, const Var& real_batch, const Var& fake_batch,
                   double step = 1e-5);

std::vector<LossLogRow> train(GanModel& model, const std::vector<Curve>& member_curves,
                              const TrainConfig& config);

void write_loss_log(const std::string& path, const std::vector<LossLogRow>& rows);

void save_gan(const GanModel& model, const std::string& path);
GanModel load_gan(const std::string& path);

std::string subset_fingerprint(const std::vector<std::string>& household_ids);

} // namespace gpa
