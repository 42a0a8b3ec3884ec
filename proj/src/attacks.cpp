#include "gpa/attacks.hpp"

#include <cmath>
#include <sstream>

#include "gpa/errors.hpp"
#include "gpa/indicators.hpp"

namespace gpa {

void AttackInput::validate() const {
    if (model == nullptr) throw DataError("attack input: no model");
    for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
        if (normalized_sets[i].empty())
            throw DataError("attack input: candidate set " + std::to_string(i) + " is empty");
    }
}

int select_index(const std::array<double, kNumCandidateSets>& scores, ScoreRule rule) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(kNumCandidateSets); ++i) {
        const bool better = rule == ScoreRule::ArgMax ? scores[i] > scores[best]
                                                      : scores[i] < scores[best];
        if (better) best = i; // strict comparison keeps the lowest index on ties
    }
    return best;
}

AttackOutcome likelihood_attack(const AttackInput& input) {
    input.validate();
    AttackOutcome out;
    out.attack = "likelihood";
    for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
        const std::vector<double> probs = discriminate(*input.model, input.normalized_sets[i]);
        double acc = 0.0;
        for (const double p : probs) acc += p;
        out.scores[i] = acc / static_cast<double>(probs.size());
    }
    out.guess = select_index(out.scores, ScoreRule::ArgMax);
    return out;
}

namespace {

// l2 norm of a gradient set, by value
double grad_norm_value(const std::vector<Var>& grads) {
    double sq = 0.0;
    for (const auto& g : grads)
        for (std::size_t i = 0; i < g.value().size(); ++i) sq += g.value()[i] * g.value()[i];
    return std::sqrt(sq);
}

} // namespace

AttackOutcome gradient_norm_attack(const AttackInput& input, GradNormLossMode mode) {
    input.validate();
    const GanModel& model = *input.model;
    AttackOutcome out;
    out.attack = "gradient_norm";

    // one seeded fake curve, shared across every scored curve so set scores
    // differ only through the real term
    std::vector<Curve> fake = generate(model, 1, derive_seed(input.seed, "gradnorm_fake"));
    Var fake_batch = curves_to_batch(fake, model.arch.dtype);
    const double eta = model.config.eta;

    for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
        double acc = 0.0;
        for (const Curve& curve : input.normalized_sets[i]) {
            Var real = curves_to_batch({curve}, model.arch.dtype);
            Var loss = mode == GradNormLossMode::RealPlusFake
                           ? discriminator_loss(model, real, fake_batch)
                           : bce_with_target(discriminator_forward(model, real), 1.0);
            if (eta > 0.0) {
                // the attacker exploits the full training loss, including the
                // regularization term
                Var penalty = l2_norm(grad(loss, model.disc_params));
                loss = sub(loss, scale(penalty, eta));
            }
            acc += grad_norm_value(grad(loss, model.disc_params));
        }
        out.scores[i] = acc / static_cast<double>(input.normalized_sets[i].size());
    }
    out.guess = select_index(out.scores, ScoreRule::ArgMin);
    return out;
}

AttackOutcome indicators_attack(const AttackInput& input) {
    input.validate();
    const GanModel& model = *input.model;
    AttackOutcome out;
    out.attack = "indicators";
    const NormalizationRecord rec{model.norm_cap};
    for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
        if (input.raw_sets[i].empty())
            throw DataError("indicators attack: raw candidate set " + std::to_string(i) +
                            " is empty");
        const std::size_t n = input.raw_sets[i].size();
        std::vector<Curve> artificial =
            denormalize(generate(model, n, derive_seed(input.seed, "indicators_attack", i)), rec);
        out.scores[i] = average_indicator_distance(input.raw_sets[i], artificial).average;
    }
    out.guess = select_index(out.scores, ScoreRule::ArgMin);
    return out;
}

std::vector<AttackOutcome> per_household_variant(AttackFn attack, const AttackInput& input,
                                                 std::size_t n_trials, std::uint64_t seed) {
    input.validate();
    std::vector<AttackOutcome> outcomes;
    outcomes.reserve(n_trials);
    for (std::size_t t = 0; t < n_trials; ++t) {
        Rng rng(derive_seed(seed, "household_trial", t));
        AttackInput restricted;
        restricted.model = input.model;
        restricted.seed = derive_seed(seed, "household_attack", t);
        for (std::size_t i = 0; i < kNumCandidateSets; ++i) {
            const auto ids = household_ids(input.normalized_sets[i]);
            const std::string chosen = ids[rng.uniform_index(ids.size())];
            restricted.normalized_sets[i] =
                curves_of_households(input.normalized_sets[i], {chosen});
            if (!input.raw_sets[i].empty())
                restricted.raw_sets[i] = curves_of_households(input.raw_sets[i], {chosen});
        }
        AttackOutcome o = attack(restricted);
        o.variant = AttackVariant::PerHousehold;
        outcomes.push_back(std::move(o));
    }
    return outcomes;
}

std::string attack_csv_header() {
    return "run,attack,variant,scenario,guess,truth,correct,"
           "score_0,score_1,score_2,score_3,score_4";
}

std::string attack_csv_line(const AttackCsvRow& row) {
    std::ostringstream os;
    os.precision(17);
    os << row.run << ',' << row.attack << ',' << row.variant << ',' << row.scenario << ','
       << row.guess << ',' << row.truth << ',' << (row.guess == row.truth ? 1 : 0);
    for (const double s : row.scores) os << ',' << s;
    return os.str();
}

} // namespace gpa
