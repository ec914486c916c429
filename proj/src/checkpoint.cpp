#include "hamflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hamflow {

namespace {

constexpr const char* kFormat = "hamflow-mlp/1";

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string param_digest(const Vec& params) {
    std::string bytes(static_cast<std::size_t>(params.size()) * sizeof(double), '\0');
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(params(i));
        for (std::size_t b = 0; b < 8; ++b)
            bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    return fnv1a_hex(bytes);
}

nlohmann::json mlp_to_json(const Mlp& net, const std::string& config_hash) {
    const MlpSpec& spec = net.spec();
    nlohmann::json doc;
    doc["format"] = kFormat;
    doc["activation"] = "tanh";
    doc["input_dim"] = spec.input_dim;
    doc["output_dim"] = spec.output_dim;
    doc["hidden"] = spec.hidden;
    doc["time_embedding"] = {{"conditioned", spec.time_conditioned},
                             {"fourier_features", spec.fourier_features},
                             {"base", 2},
                             {"raw_time", true}};
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        auto [fan_out, fan_in] = net.layer_shape(l);
        const auto w = net.weight(l);
        const auto b = net.bias(l);
        std::vector<double> wv(w.data(), w.data() + w.size());
        std::vector<double> bv(b.data(), b.data() + b.size());
        layers.push_back({{"shape", {fan_out, fan_in}}, {"weight", wv}, {"bias", bv}});
    }
    doc["layers"] = std::move(layers);
    doc["config_hash"] = config_hash;
    doc["param_digest"] = param_digest(net.params());
    return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != kFormat) throw CheckpointError("checkpoint: unknown format");
        if (doc.at("activation").get<std::string>() != "tanh")
            throw CheckpointError("checkpoint: unsupported activation");
        MlpSpec spec;
        spec.input_dim = doc.at("input_dim").get<int>();
        spec.output_dim = doc.at("output_dim").get<int>();
        spec.hidden = doc.at("hidden").get<std::vector<int>>();
        spec.time_conditioned = doc.at("time_embedding").at("conditioned").get<bool>();
        spec.fourier_features = doc.at("time_embedding").at("fourier_features").get<int>();
        Mlp net(spec);
        const auto& layers = doc.at("layers");
        if (layers.size() != net.layer_count()) throw CheckpointError("checkpoint: layer count mismatch");
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            auto [fan_out, fan_in] = net.layer_shape(l);
            const auto shape = layers[l].at("shape").get<std::vector<int>>();
            if (shape != std::vector<int>{fan_out, fan_in}) throw CheckpointError("checkpoint: layer shape mismatch");
            const auto wv = layers[l].at("weight").get<std::vector<double>>();
            const auto bv = layers[l].at("bias").get<std::vector<double>>();
            if (wv.size() != static_cast<std::size_t>(fan_out * fan_in) || bv.size() != static_cast<std::size_t>(fan_out))
                throw CheckpointError("checkpoint: parameter array has wrong length");
            auto w = net.weight(l);
            std::copy(wv.begin(), wv.end(), w.data());
            auto b = net.bias(l);
            std::copy(bv.begin(), bv.end(), b.data());
        }
        if (param_digest(net.params()) != doc.at("param_digest").get<std::string>())
            throw CheckpointError("checkpoint: integrity check failed (parameter digest mismatch)");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: malformed document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: invalid architecture: ") + e.what());
    }
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out << mlp_to_json(net, config_hash).dump(1) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint: not valid JSON: ") + e.what());
    }
    return mlp_from_json(doc);
}

}  // namespace hamflow
