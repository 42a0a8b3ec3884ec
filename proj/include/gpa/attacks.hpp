#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "gpa/curves.hpp"
#include "gpa/gan.hpp"

namespace gpa {

inline constexpr std::size_t kNumCandidateSets = 5;

// Candidate sets handed to the attacker: normalized curves for the
// model-based attacks, the same curves on the raw kWh scale for the
// indicators attack.
struct AttackInput {
    std::array<std::vector<Curve>, kNumCandidateSets> normalized_sets;
    std::array<std::vector<Curve>, kNumCandidateSets> raw_sets;
    const GanModel* model = nullptr;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class AttackVariant { PerSubset, PerHousehold };
enum class ScoreRule { ArgMax, ArgMin };

struct AttackOutcome {
    std::string attack;
    AttackVariant variant = AttackVariant::PerSubset;
    int guess = 0;
    std::array<double, kNumCandidateSets> scores{};
};

// argmax/argmin with lowest-index tie-breaking
int select_index(const std::array<double, kNumCandidateSets>& scores, ScoreRule rule);

// How the gradient-norm attack forms the per-curve loss: the real-curve
// cross-entropy term plus one seeded fake curve (so the generator is
// genuinely part of the loss), or the real term alone for ablation.
enum class GradNormLossMode { RealPlusFake, RealOnly };

// Mean discriminator output per set; highest wins.
AttackOutcome likelihood_attack(const AttackInput& input);

// Mean per-curve ||grad_theta L||_2 per set; lowest wins. When the model was
// trained with the regularized objective the attacker differentiates the full
// regularized loss (second-order path).
AttackOutcome gradient_norm_attack(const AttackInput& input,
                                   GradNormLossMode mode = GradNormLossMode::RealPlusFake);

// Black-box: per set, generates as many artificial curves as the set holds
// and scores it by the average indicator distance; lowest wins.
AttackOutcome indicators_attack(const AttackInput& input);

using AttackFn = std::function<AttackOutcome(const AttackInput&)>;

// Restricts each candidate set to one randomly drawn household per subset and
// reruns the attack, n_trials times.
std::vector<AttackOutcome> per_household_variant(AttackFn attack, const AttackInput& input,
                                                 std::size_t n_trials, std::uint64_t seed);

struct AttackCsvRow {
    std::size_t run = 0;
    std::string attack;
    std::string variant;
    std::string scenario;
    int guess = 0;
    int truth = 0;
    std::array<double, kNumCandidateSets> scores{};
};

std::string attack_csv_header();
std::string attack_csv_line(const AttackCsvRow& row);

} // namespace gpa
