#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hamflow/checkpoint.hpp"
#include "toml.hpp"

namespace hamflow::cli {

namespace {

using json = nlohmann::json;

// Reads keys from one table and remembers which were consumed, so leftovers
// (typos) can be reported.
class Section {
public:
    Section(const json& doc, std::string where) : doc_(doc), where_(std::move(where)) {
        if (!doc_.is_object()) fail("", "expected a table");
    }

    bool has(const std::string& key) const { return doc_.contains(key); }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return doc_.at(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number()) fail(key, "expected a number");
        return v.get<double>();
    }

    long long integer(const std::string& key, long long fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number_integer()) fail(key, "expected an integer");
        return v.get<long long>();
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }

    std::vector<int> widths(const std::string& key, const std::vector<int>& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_array()) fail(key, "expected an array of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer() || e.get<long long>() < 1) fail(key, "widths must be positive integers");
            out.push_back(e.get<int>());
        }
        return out;
    }

    Vec vector(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array() || v.empty()) fail(key, "expected a non-empty array of numbers");
        Vec out(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) fail(key, "expected numbers");
            out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
        }
        return out;
    }

    Section child(const std::string& key) {
        static const json empty = json::object();
        if (!has(key)) return Section(empty, where_ + key + ".");
        return Section(raw(key), where_ + key + ".");
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items())
            if (!used_.count(key)) fail(key, "unknown key");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        throw ConfigError(where_ + key + ": " + what);
    }

private:
    const json& doc_;
    std::string where_;
    std::set<std::string> used_;
};

int positive_int(Section& s, const std::string& key, long long fallback, long long min = 1) {
    const long long v = s.integer(key, fallback);
    if (v < min || v > 100000000) s.fail(key, "out of range");
    return static_cast<int>(v);
}

double positive_number(Section& s, const std::string& key, double fallback) {
    const double v = s.number(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) s.fail(key, "must be positive");
    return v;
}

std::optional<TimeDistribution> time_law(Section& s) {
    if (!s.has("time")) return std::nullopt;
    const json& v = s.raw("time");
    if (v.is_number()) {
        if (!(v.get<double>() >= 0.0)) s.fail("time", "must be non-negative");
        return TimeDistribution::fixed(v.get<double>());
    }
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        const double lo = v[0].get<double>();
        const double hi = v[1].get<double>();
        if (!(lo >= 0.0) || !(hi > lo)) s.fail("time", "need 0 <= lo < hi");
        return TimeDistribution::uniform(lo, hi);
    }
    s.fail("time", "expected a number (fixed time) or [lo, hi]");
}

json time_json(const std::optional<TimeDistribution>& law) {
    if (!law) return nullptr;
    if (law->kind == TimeDistribution::Kind::Fixed) return law->lo;
    return json::array({law->lo, law->hi});
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

GaussianMixture mixture_from_json(const json& doc) {
    Section s(doc, "mixture.");
    for (const char* key : {"weights", "means", "variances"})
        if (!s.has(key)) s.fail(key, "required");
    const json& w = s.raw("weights");
    const json& mu = s.raw("means");
    const json& var = s.raw("variances");
    s.finish();
    try {
        std::vector<double> weights = w.get<std::vector<double>>();
        std::vector<double> variances = var.get<std::vector<double>>();
        std::vector<Vec> means;
        for (const auto& m : mu) {
            if (m.is_number()) {
                means.push_back(Vec::Constant(1, m.get<double>()));
            } else {
                const auto coords = m.get<std::vector<double>>();
                means.push_back(Eigen::Map<const Vec>(coords.data(), static_cast<Eigen::Index>(coords.size())));
            }
        }
        return GaussianMixture(std::move(weights), std::move(means), std::move(variances));
    } catch (const json::exception&) {
        throw ConfigError("mixture: weights, means and variances must be numeric arrays");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("mixture: ") + e.what());
    }
}

json mixture_to_json(const GaussianMixture& mixture) {
    json means = json::array();
    for (const auto& m : mixture.means()) means.push_back(to_std(m));
    return {{"weights", mixture.weights()}, {"means", means}, {"variances", mixture.variances()}};
}

ExperimentConfig config_from_json(const json& doc, const std::filesystem::path& base_dir, const std::string& name) {
    Section root(doc, "");
    ExperimentConfig cfg;
    cfg.name = name;
    if (!root.has("mixture")) throw ConfigError("mixture: section is required");
    cfg.mixture = mixture_from_json(root.raw("mixture"));
    const int d = cfg.mixture.dim();

    const long long seed = root.integer("seed", 0);
    if (seed < 0) root.fail("seed", "must be non-negative");
    cfg.out = root.string("out", "runs/" + name);

    Section kind = root.child("kind");
    const std::string kind_name = kind.string("name", "oscillation");
    if (kind_name == "diffusion") {
        cfg.kind = DiffusionKind{};
    } else if (kind_name == "flow_matching") {
        cfg.kind = FlowMatchingKind{};
    } else if (kind_name == "oscillation") {
        double alpha = natural_alpha(cfg.mixture);
        cfg.alpha_auto = true;
        if (kind.has("alpha")) {
            const json& a = kind.raw("alpha");
            const bool is_auto = a.is_string() && a.get<std::string>() == "auto";
            if (!is_auto) {
                if (!a.is_number() || !(a.get<double>() > 0.0))
                    kind.fail("alpha", "expected a positive number or \"auto\"");
                alpha = a.get<double>();
                cfg.alpha_auto = false;
            }
        }
        cfg.kind = OscillationKind{alpha};
    } else if (kind_name == "reflection") {
        Box box = reflection_box(cfg.mixture);
        if (kind.has("box_lo") || kind.has("box_hi")) {
            if (!kind.has("box_lo") || !kind.has("box_hi")) kind.fail("box_lo", "box_lo and box_hi go together");
            box = Box{kind.vector("box_lo"), kind.vector("box_hi")};
            if (box.lo.size() != d || box.hi.size() != d) kind.fail("box_lo", "box dimension must match the mixture");
        }
        cfg.kind = ReflectionKind{box};
    } else {
        kind.fail("name", "unknown kind '" + kind_name + "' (diffusion, flow_matching, oscillation, reflection)");
    }
    kind.finish();
    try {
        validate_kind(cfg.kind);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("kind: ") + e.what());
    }

    Section net = root.child("net");
    cfg.net = MlpSpec{d, d, net.widths("hidden", {64, 64}), true, positive_int(net, "fourier_features", 6, 0)};
    net.finish();

    Section train = root.child("train");
    cfg.train.iterations = positive_int(train, "iterations", 2000, 0);
    cfg.train.batch = positive_int(train, "batch", 512);
    cfg.train.lr = positive_number(train, "lr", 1e-3);
    cfg.train.lr_final_fraction = positive_number(train, "lr_final_fraction", 1.0);
    cfg.train.antithetic = train.boolean("antithetic", false);
    cfg.train.time = time_law(train);
    train.finish();

    Section hsm = root.child("hsm");
    HsmConfig& h = cfg.hsm.config;
    h.horizon = positive_number(hsm, "horizon", 1.0);
    h.time = time_law(hsm);
    h.n_steps = positive_int(hsm, "n_steps", 5);
    h.k_inner = positive_int(hsm, "k_inner", 5);
    h.lr_theta = positive_number(hsm, "lr_theta", 1e-3);
    h.lr_phi = positive_number(hsm, "lr_phi", 2e-3);
    h.lr_final_fraction = positive_number(hsm, "lr_final_fraction", 1.0);
    h.batch = positive_int(hsm, "batch", 512);
    h.iterations = positive_int(hsm, "iterations", 2000, 0);
    h.diagnostic_interval = positive_int(hsm, "diagnostic_interval", 50);
    h.n_esm = static_cast<std::size_t>(positive_int(hsm, "n_esm", 4096));
    h.patience = positive_int(hsm, "patience", 20);
    cfg.hsm.force_hidden = hsm.widths("force_hidden", {64, 64});
    cfg.hsm.velocity_hidden = hsm.widths("velocity_hidden", {64, 64});
    hsm.finish();

    Section sample = root.child("sample");
    cfg.sample.steps = positive_int(sample, "steps", 64);
    cfg.sample.n = static_cast<std::size_t>(positive_int(sample, "n", 10000));
    if (sample.has("checkpoint")) {
        std::filesystem::path p = sample.string("checkpoint", "");
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p)) sample.fail("checkpoint", "file not found: " + p.string());
        cfg.sample.checkpoint = p;
    }
    sample.finish();
    root.finish();

    cfg.set_seed(static_cast<std::uint64_t>(seed));
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    json doc;
    try {
        if (path.extension() == ".json")
            doc = json::parse(buffer.str());
        else if (path.extension() == ".toml")
            doc = parse_toml(buffer.str());
        else
            throw ConfigError(path.string() + ": expected a .toml or .json file");
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const TomlError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(doc, path.parent_path(), path.stem().string());
}

void ExperimentConfig::set_seed(std::uint64_t value) {
    seed = value;
    train.seed = value;
    hsm.config.seed = value;
}

json ExperimentConfig::resolved() const {
    json kind_doc = {{"name", kind_name(kind)}, {"horizon", horizon(kind)}};
    if (const auto* osc = std::get_if<OscillationKind>(&kind)) {
        kind_doc["alpha"] = osc->alpha;
        kind_doc["alpha_auto"] = alpha_auto;
    }
    if (const auto* refl = std::get_if<ReflectionKind>(&kind)) {
        kind_doc["box_lo"] = to_std(refl->box.lo);
        kind_doc["box_hi"] = to_std(refl->box.hi);
    }
    const HsmConfig& h = hsm.config;
    return {
        {"name", name},
        {"seed", seed},
        {"out", out.string()},
        {"mixture", mixture_to_json(mixture)},
        {"kind", kind_doc},
        {"net", {{"hidden", net.hidden}, {"fourier_features", net.fourier_features}}},
        {"train",
         {{"iterations", train.iterations},
          {"batch", train.batch},
          {"lr", train.lr},
          {"lr_final_fraction", train.lr_final_fraction},
          {"antithetic", train.antithetic},
          {"time", train.time ? time_json(train.time) : json::array({0.0, horizon(kind)})}}},
        {"hsm",
         {{"horizon", h.horizon},
          {"time", h.time ? time_json(h.time) : json::array({0.0, h.horizon})},
          {"n_steps", h.n_steps},
          {"k_inner", h.k_inner},
          {"lr_theta", h.lr_theta},
          {"lr_phi", h.lr_phi},
          {"lr_final_fraction", h.lr_final_fraction},
          {"batch", h.batch},
          {"iterations", h.iterations},
          {"diagnostic_interval", h.diagnostic_interval},
          {"n_esm", h.n_esm},
          {"patience", h.patience},
          {"force_hidden", hsm.force_hidden},
          {"velocity_hidden", hsm.velocity_hidden}}},
        {"sample",
         {{"steps", sample.steps},
          {"n", sample.n},
          {"checkpoint", sample.checkpoint ? json(sample.checkpoint->string()) : json(nullptr)}}},
    };
}

std::string ExperimentConfig::hash() const {
    json doc = resolved();
    doc.erase("out");  // where results go does not change them
    return fnv1a_hex(doc.dump());
}

}  // namespace hamflow::cli
