#include "gpa/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "gpa/checkpoint.hpp"
#include "gpa/errors.hpp"

namespace gpa {

using nlohmann::json;

std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::DiffLr: return "diff_lr";
        case Scenario::SameLr: return "same_lr";
        case Scenario::Regularized: return "regularized";
    }
    return "same_lr";
}

Scenario scenario_from_name(const std::string& name) {
    if (name == "diff_lr") return Scenario::DiffLr;
    if (name == "same_lr") return Scenario::SameLr;
    if (name == "regularized") return Scenario::Regularized;
    throw DataError("unknown scenario '" + name + "'");
}

GanArchitecture GanArchitecture::desk() { return GanArchitecture{}; }

GanArchitecture GanArchitecture::paper_scale() {
    GanArchitecture a;
    a.latent_dim = 42;
    a.curve_len = 672;
    a.base_len = 42;
    a.gen_channels = {352, 216, 168, 116, 1};
    a.disc_channels = {16, 64, 144, 280};
    a.disc_hidden = 80;
    a.kernel = 4;
    return a;
}

void GanArchitecture::validate() const {
    if (gen_channels.size() < 2 || gen_channels.back() != 1)
        throw DataError("gan architecture: generator channels must end in 1");
    if (disc_channels.empty()) throw DataError("gan architecture: no discriminator channels");
    if (kernel < 2 || kernel % 2 != 0)
        throw DataError("gan architecture: kernel must be even and >= 2");
    std::size_t len = base_len;
    for (std::size_t i = 0; i + 1 < gen_channels.size(); ++i) len *= 2;
    if (len != curve_len)
        throw DataError("gan architecture: generator stages produce length " +
                        std::to_string(len) + ", expected " + std::to_string(curve_len));
    std::size_t dlen = curve_len;
    for (std::size_t i = 0; i < disc_channels.size(); ++i) {
        if (dlen % 2 != 0)
            throw DataError("gan architecture: discriminator stage on odd length");
        dlen /= 2;
    }
}

std::size_t GanArchitecture::gen_param_count() const {
    const std::size_t k = static_cast<std::size_t>(kernel);
    std::size_t total = latent_dim * gen_channels[0] * base_len + gen_channels[0] * base_len;
    for (std::size_t i = 0; i + 1 < gen_channels.size(); ++i)
        total += gen_channels[i] * gen_channels[i + 1] * k + gen_channels[i + 1];
    return total;
}

std::size_t GanArchitecture::disc_param_count() const {
    const std::size_t k = static_cast<std::size_t>(kernel);
    std::size_t total = 0;
    std::size_t cin = 1;
    for (const std::size_t cout : disc_channels) {
        total += cout * cin * k + cout;
        cin = cout;
    }
    const std::size_t flat = disc_channels.back() * (curve_len >> disc_channels.size());
    total += flat * disc_hidden + disc_hidden;
    total += disc_hidden + 1;
    return total;
}

TrainConfig TrainConfig::preset(Scenario s) {
    TrainConfig c;
    c.scenario = s;
    switch (s) {
        case Scenario::DiffLr:
            c.lr_generator = 1e-4;
            c.lr_discriminator = 1e-5;
            c.eta = 0.0;
            break;
        case Scenario::SameLr:
            c.lr_generator = 1e-4;
            c.lr_discriminator = 1e-4;
            c.eta = 0.0;
            break;
        case Scenario::Regularized:
            c.lr_generator = 1e-4;
            c.lr_discriminator = 1e-4;
            c.eta = 1e-2;
            break;
    }
    return c;
}

namespace {

Var make_weight(Shape shape, Rng& rng, DType dt, std::vector<Var>& params,
                std::vector<std::string>& names, const std::string& name) {
    params.push_back(Var::param(Tensor::randn(std::move(shape), rng, 0.02, dt)));
    names.push_back(name);
    return params.back();
}

Var make_bias(Shape shape, DType dt, std::vector<Var>& params, std::vector<std::string>& names,
              const std::string& name) {
    params.push_back(Var::param(Tensor::zeros(std::move(shape), dt)));
    names.push_back(name);
    return params.back();
}

} // namespace

GanModel init_gan(const GanArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    GanModel m;
    m.arch = arch;
    m.init_seed = seed;
    Rng rng(derive_seed(seed, "gan_init"));
    const DType dt = arch.dtype;
    const auto k = static_cast<std::size_t>(arch.kernel);

    // generator
    make_weight({arch.latent_dim, arch.gen_channels[0] * arch.base_len}, rng, dt, m.gen_params,
                m.gen_names, "gen.lin.w");
    make_bias({arch.gen_channels[0] * arch.base_len}, dt, m.gen_params, m.gen_names, "gen.lin.b");
    for (std::size_t i = 0; i + 1 < arch.gen_channels.size(); ++i) {
        const std::string tag = "gen.up" + std::to_string(i);
        make_weight({arch.gen_channels[i], arch.gen_channels[i + 1], k}, rng, dt, m.gen_params,
                    m.gen_names, tag + ".w");
        make_bias({arch.gen_channels[i + 1]}, dt, m.gen_params, m.gen_names, tag + ".b");
    }

    // discriminator
    std::size_t cin = 1;
    for (std::size_t i = 0; i < arch.disc_channels.size(); ++i) {
        const std::string tag = "disc.conv" + std::to_string(i);
        const std::size_t cout = arch.disc_channels[i];
        make_weight({cout, cin, k}, rng, dt, m.disc_params, m.disc_names, tag + ".w");
        make_bias({cout}, dt, m.disc_params, m.disc_names, tag + ".b");
        SpectralState st;
        st.init(cout, cin * k, rng, dt);
        m.sn_states.push_back(std::move(st));
        cin = cout;
    }
    const std::size_t flat = arch.disc_channels.back() * (arch.curve_len >> arch.disc_channels.size());
    make_weight({flat, arch.disc_hidden}, rng, dt, m.disc_params, m.disc_names, "disc.lin1.w");
    make_bias({arch.disc_hidden}, dt, m.disc_params, m.disc_names, "disc.lin1.b");
    {
        SpectralState st;
        st.init(flat, arch.disc_hidden, rng, dt);
        m.sn_states.push_back(std::move(st));
    }
    make_weight({arch.disc_hidden, 1}, rng, dt, m.disc_params, m.disc_names, "disc.lin2.w");
    make_bias({1}, dt, m.disc_params, m.disc_names, "disc.lin2.b");
    {
        SpectralState st;
        st.init(arch.disc_hidden, 1, rng, dt);
        m.sn_states.push_back(std::move(st));
    }

    m.opt_g.lr = 1e-4;
    m.opt_d.lr = 1e-4;
    // settle u/v once so sigma = u^T W v is meaningful before the first
    // training step (v starts at zero otherwise)
    update_spectral_state(m, 1);
    return m;
}

void update_spectral_state(GanModel& model, int iters) {
    const auto k = static_cast<std::size_t>(model.arch.kernel);
    std::size_t layer = 0;
    std::size_t pi = 0; // index into disc_params, layout w,b per layer
    for (std::size_t i = 0; i < model.arch.disc_channels.size(); ++i, pi += 2, ++layer) {
        const Tensor& w = model.disc_params[pi].value();
        Tensor w2d({w.dim(0), w.dim(1) * k}, w.data(), w.dtype());
        detail::power_iterate(w2d, model.sn_states[layer], iters);
    }
    detail::power_iterate(model.disc_params[pi].value(), model.sn_states[layer], iters);
    ++layer;
    pi += 2;
    detail::power_iterate(model.disc_params[pi].value(), model.sn_states[layer], iters);
}

Var curves_to_batch(const std::vector<Curve>& curves, DType dt) {
    if (curves.empty()) throw DataError("curves_to_batch: empty curve list");
    const std::size_t n = curves.size(), l = curves.front().values.size();
    Tensor t({n, l}, dt);
    for (std::size_t i = 0; i < n; ++i) {
        if (curves[i].values.size() != l)
            throw ShapeError("curves_to_batch: inconsistent curve lengths " + std::to_string(l) +
                             " vs " + std::to_string(curves[i].values.size()));
        for (std::size_t j = 0; j < l; ++j) t[i * l + j] = curves[i].values[j];
    }
    t.quantize();
    return Var::constant(std::move(t));
}

Var generator_forward(const GanModel& model, const Var& z) {
    const auto& arch = model.arch;
    const int pad = (arch.kernel - 2) / 2;
    const std::size_t n = z.value().dim(0);
    Var h = add_bias(matmul(z, model.gen_params[0]), model.gen_params[1]);
    h = relu(h);
    h = reshape(h, {n, arch.gen_channels[0], arch.base_len});
    std::size_t pi = 2;
    for (std::size_t i = 0; i + 1 < arch.gen_channels.size(); ++i, pi += 2) {
        h = conv1d_transpose(h, model.gen_params[pi], 2, pad);
        h = add_bias(h, model.gen_params[pi + 1]);
        h = (i + 2 < arch.gen_channels.size()) ? relu(h) : tanh_op(h);
    }
    return reshape(h, {n, arch.curve_len});
}

Var discriminator_forward(const GanModel& model, const Var& x) {
    const auto& arch = model.arch;
    if (x.value().ndim() != 2 || x.value().dim(1) != arch.curve_len)
        throw ShapeError("discriminator_forward: expected [N," + std::to_string(arch.curve_len) +
                         "], got " + shape_str(x.value().shape()));
    const auto k = static_cast<std::size_t>(arch.kernel);
    const int pad = (arch.kernel - 2) / 2;
    const std::size_t n = x.value().dim(0);
    // power-iteration state is advanced explicitly by update_spectral_state;
    // forwards use the current vectors so the model stays logically const
    auto& sn = const_cast<GanModel&>(model).sn_states;

    Var h = reshape(x, {n, 1, arch.curve_len});
    std::size_t pi = 0, layer = 0;
    std::size_t cin = 1;
    for (std::size_t i = 0; i < arch.disc_channels.size(); ++i, pi += 2, ++layer) {
        const Var& w = model.disc_params[pi];
        const std::size_t cout = arch.disc_channels[i];
        Var w2d = reshape(w, {cout, cin * k});
        Var wn = reshape(spectral_normalize(w2d, sn[layer], 0), {cout, cin, k});
        h = relu(add_bias(conv1d(h, wn, 2, pad), model.disc_params[pi + 1]));
        cin = cout;
    }
    const std::size_t flat = arch.disc_channels.back() * (arch.curve_len >> arch.disc_channels.size());
    h = reshape(h, {n, flat});
    h = relu(add_bias(matmul(h, spectral_normalize(model.disc_params[pi], sn[layer], 0)),
                      model.disc_params[pi + 1]));
    pi += 2;
    ++layer;
    h = add_bias(matmul(h, spectral_normalize(model.disc_params[pi], sn[layer], 0)),
                 model.disc_params[pi + 1]);
    return reshape(sigmoid_op(h), {n});
}

std::vector<Curve> generate(const GanModel& model, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw DataError("generate: n must be >= 1");
    Rng rng(derive_seed(seed, "latent"));
    Var z = Var::constant(Tensor::randn({n, model.arch.latent_dim}, rng, 1.0, model.arch.dtype));
    // inference only: run on detached parameters so no tape is built
    GanModel view;
    view.arch = model.arch;
    for (const auto& p : model.gen_params) view.gen_params.push_back(detach(p));
    Var y = generator_forward(view, z);
    std::vector<Curve> out;
    out.reserve(n);
    const std::size_t l = model.arch.curve_len;
    for (std::size_t i = 0; i < n; ++i) {
        Curve c{"gen", std::vector<double>(l), CurveScale::Normalized};
        for (std::size_t j = 0; j < l; ++j) c.values[j] = y.value()[i * l + j];
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<double> discriminate(const GanModel& model, const std::vector<Curve>& curves) {
    Var x = curves_to_batch(curves, model.arch.dtype);
    GanModel view;
    view.arch = model.arch;
    view.sn_states = model.sn_states;
    for (const auto& p : model.disc_params) view.disc_params.push_back(detach(p));
    Var y = discriminator_forward(view, x);
    return y.value().data();
}

Var discriminator_loss(const GanModel& model, const Var& real_batch, const Var& fake_batch) {
    Var d_real = discriminator_forward(model, real_batch);
    Var d_fake = discriminator_forward(model, fake_batch);
    return add(bce_with_target(d_real, 1.0), bce_with_target(d_fake, 0.0));
}

Var regularized_loss(const GanModel& model, const Var& real_batch, const Var& fake_batch,
                     double eta) {
    if (eta < 0.0) throw DataError("regularized_loss: eta must be nonnegative");
    Var loss = discriminator_loss(model, real_batch, fake_batch);
    if (eta == 0.0) return loss;
    Var penalty = l2_norm(grad(loss, model.disc_params));
    return sub(loss, scale(penalty, eta));
}

double gradnorm_fd(const GanModel& model, const Var& real_batch, const Var& fake_batch,
                   double step) {
    GanModel& m = const_cast<GanModel&>(model);
    double sq = 0.0;
    for (auto& p : m.disc_params) {
        Tensor& t = p.mutable_value();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + step;
            const double up = discriminator_loss(model, real_batch, fake_batch).value()[0];
            t[i] = orig - step;
            const double dn = discriminator_loss(model, real_batch, fake_batch).value()[0];
            t[i] = orig;
            const double g = (up - dn) / (2.0 * step);
            sq += g * g;
        }
    }
    return std::sqrt(sq);
}

std::vector<LossLogRow> train(GanModel& model, const std::vector<Curve>& member_curves,
                              const TrainConfig& config) {
    if (member_curves.empty()) throw DataError("train: no member curves");
    if (config.batch_size == 0) throw DataError("train: batch_size must be >= 1");
    model.config = config;
    model.fingerprint = subset_fingerprint(household_ids(member_curves));
    model.opt_g.lr = config.lr_generator;
    model.opt_d.lr = config.lr_discriminator;

    Rng rng(derive_seed(config.seed, "gan_train"));
    std::vector<std::size_t> order(member_curves.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<LossLogRow> log;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        std::size_t batch_idx = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_idx) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Curve> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(member_curves[order[i]]);
            Var real = curves_to_batch(batch, model.arch.dtype);

            // discriminator step
            update_spectral_state(model, 1);
            Var z = Var::constant(
                Tensor::randn({batch.size(), model.arch.latent_dim}, rng, 1.0, model.arch.dtype));
            Var fake = detach(generator_forward(model, z));
            Var d_base = discriminator_loss(model, real, fake);
            Var d_loss = d_base;
            double penalty_val = 0.0;
            if (config.eta > 0.0) {
                Var penalty = l2_norm(grad(d_base, model.disc_params));
                penalty_val = penalty.value()[0];
                d_loss = sub(d_base, scale(penalty, config.eta));
            }
            if (has_nan(d_loss.value()))
                throw NumericError("train: NaN discriminator loss at epoch " +
                                   std::to_string(epoch) + " batch " + std::to_string(batch_idx));
            std::vector<Tensor> gd;
            for (const auto& g : grad(d_loss, model.disc_params)) gd.push_back(g.value());
            adam_step(model.opt_d, model.disc_params, gd);

            // generator step (non-saturating loss)
            Var z2 = Var::constant(
                Tensor::randn({batch.size(), model.arch.latent_dim}, rng, 1.0, model.arch.dtype));
            Var fake2 = generator_forward(model, z2);
            Var g_loss = bce_with_target(discriminator_forward(model, fake2), 1.0);
            if (has_nan(g_loss.value()))
                throw NumericError("train: NaN generator loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batch_idx));
            std::vector<Tensor> gg;
            for (const auto& g : grad(g_loss, model.gen_params)) gg.push_back(g.value());
            adam_step(model.opt_g, model.gen_params, gg);

            log.push_back({epoch, batch_idx, d_base.value()[0], g_loss.value()[0], penalty_val});
        }
        model.epoch += 1;
        if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 &&
            !config.checkpoint_dir.empty()) {
            save_gan(model, config.checkpoint_dir + "/checkpoint_epoch_" +
                                std::to_string(epoch + 1) + ".gpt");
        }
    }
    return log;
}

void write_loss_log(const std::string& path, const std::vector<LossLogRow>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("write_loss_log: cannot open " + path);
    os << "epoch,batch,d_loss,g_loss,grad_norm_penalty\n";
    os.precision(17);
    for (const auto& r : rows)
        os << r.epoch << ',' << r.batch << ',' << r.d_loss << ',' << r.g_loss << ','
           << r.grad_norm_penalty << '\n';
}

std::string subset_fingerprint(const std::vector<std::string>& ids) {
    // canonical order: the fingerprint identifies the set, not the listing
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& id : sorted) {
        for (const char c : id) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

namespace {

json arch_to_json(const GanArchitecture& a) {
    return json{{"latent_dim", a.latent_dim},     {"curve_len", a.curve_len},
                {"base_len", a.base_len},         {"gen_channels", a.gen_channels},
                {"disc_channels", a.disc_channels}, {"disc_hidden", a.disc_hidden},
                {"kernel", a.kernel},             {"dtype", a.dtype == DType::F32 ? "f32" : "f64"}};
}

GanArchitecture arch_from_json(const json& j) {
    GanArchitecture a;
    a.latent_dim = j.at("latent_dim");
    a.curve_len = j.at("curve_len");
    a.base_len = j.at("base_len");
    a.gen_channels = j.at("gen_channels").get<std::vector<std::size_t>>();
    a.disc_channels = j.at("disc_channels").get<std::vector<std::size_t>>();
    a.disc_hidden = j.at("disc_hidden");
    a.kernel = j.at("kernel");
    a.dtype = j.at("dtype") == "f32" ? DType::F32 : DType::F64;
    return a;
}

json adam_to_json(const AdamState& s) {
    return json{{"lr", s.lr}, {"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps},
                {"step", s.step}};
}

void adam_from_json(const json& j, AdamState& s) {
    s.lr = j.at("lr");
    s.beta1 = j.at("beta1");
    s.beta2 = j.at("beta2");
    s.eps = j.at("eps");
    s.step = j.at("step");
}

} // namespace

void save_gan(const GanModel& model, const std::string& path) {
    json header;
    header["kind"] = "gan";
    header["arch"] = arch_to_json(model.arch);
    header["epoch"] = model.epoch;
    header["fingerprint"] = model.fingerprint;
    header["norm_cap"] = model.norm_cap;
    header["init_seed"] = model.init_seed;
    header["config"] = json{{"epochs", model.config.epochs},
                            {"batch_size", model.config.batch_size},
                            {"lr_generator", model.config.lr_generator},
                            {"lr_discriminator", model.config.lr_discriminator},
                            {"eta", model.config.eta},
                            {"seed", model.config.seed},
                            {"scenario", scenario_name(model.config.scenario)}};
    header["opt_g"] = adam_to_json(model.opt_g);
    header["opt_d"] = adam_to_json(model.opt_d);

    std::vector<CheckpointRecord> records;
    for (std::size_t i = 0; i < model.gen_params.size(); ++i)
        records.push_back({model.gen_names[i], model.gen_params[i].value()});
    for (std::size_t i = 0; i < model.disc_params.size(); ++i)
        records.push_back({model.disc_names[i], model.disc_params[i].value()});
    for (std::size_t i = 0; i < model.sn_states.size(); ++i) {
        records.push_back({"sn." + std::to_string(i) + ".u", model.sn_states[i].u});
        records.push_back({"sn." + std::to_string(i) + ".v", model.sn_states[i].v});
    }
    for (std::size_t i = 0; i < model.opt_g.m.size(); ++i) {
        records.push_back({"optg.m." + std::to_string(i), model.opt_g.m[i]});
        records.push_back({"optg.v." + std::to_string(i), model.opt_g.v[i]});
    }
    for (std::size_t i = 0; i < model.opt_d.m.size(); ++i) {
        records.push_back({"optd.m." + std::to_string(i), model.opt_d.m[i]});
        records.push_back({"optd.v." + std::to_string(i), model.opt_d.v[i]});
    }
    write_checkpoint(path, header.dump(), records);
}

GanModel load_gan(const std::string& path) {
    auto [header_str, records] = read_checkpoint(path);
    json header = json::parse(header_str);
    if (header.value("kind", "") != "gan") throw DataError("load_gan: not a GAN checkpoint");
    GanModel m = init_gan(arch_from_json(header.at("arch")), header.at("init_seed"));
    m.epoch = header.at("epoch");
    m.fingerprint = header.at("fingerprint");
    m.norm_cap = header.at("norm_cap");
    const json& cfg = header.at("config");
    m.config.epochs = cfg.at("epochs");
    m.config.batch_size = cfg.at("batch_size");
    m.config.lr_generator = cfg.at("lr_generator");
    m.config.lr_discriminator = cfg.at("lr_discriminator");
    m.config.eta = cfg.at("eta");
    m.config.seed = cfg.at("seed");
    m.config.scenario = scenario_from_name(cfg.at("scenario"));
    adam_from_json(header.at("opt_g"), m.opt_g);
    adam_from_json(header.at("opt_d"), m.opt_d);

    auto find = [&records](const std::string& name) -> Tensor& {
        for (auto& r : records)
            if (r.name == name) return r.tensor;
        throw DataError("load_gan: missing record " + name);
    };
    for (std::size_t i = 0; i < m.gen_params.size(); ++i)
        m.gen_params[i].mutable_value() = find(m.gen_names[i]);
    for (std::size_t i = 0; i < m.disc_params.size(); ++i)
        m.disc_params[i].mutable_value() = find(m.disc_names[i]);
    for (std::size_t i = 0; i < m.sn_states.size(); ++i) {
        m.sn_states[i].u = find("sn." + std::to_string(i) + ".u");
        m.sn_states[i].v = find("sn." + std::to_string(i) + ".v");
    }
    if (m.opt_g.step > 0) {
        m.opt_g.m.clear();
        m.opt_g.v.clear();
        for (std::size_t i = 0; i < m.gen_params.size(); ++i) {
            m.opt_g.m.push_back(find("optg.m." + std::to_string(i)));
            m.opt_g.v.push_back(find("optg.v." + std::to_string(i)));
        }
    }
    if (m.opt_d.step > 0) {
        m.opt_d.m.clear();
        m.opt_d.v.clear();
        for (std::size_t i = 0; i < m.disc_params.size(); ++i) {
            m.opt_d.m.push_back(find("optd.m." + std::to_string(i)));
            m.opt_d.v.push_back(find("optd.v." + std::to_string(i)));
        }
    }
    return m;
}

} // namespace gpa
