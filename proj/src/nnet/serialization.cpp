#include "reglearn/nnet/serialization.hpp"

#include <sodium.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace reglearn {

void require_known_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
    if (!j.is_object()) throw std::invalid_argument(std::string(context) + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (std::string_view a : allowed) ok = ok || item.key() == a;
        if (!ok) throw std::invalid_argument(std::string(context) + ": unknown key '" + item.key() + "'");
    }
}

// ---- base64 of little-endian doubles ------------------------------------------

std::string encode_f64(std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &values[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    const int variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(std::strlen(out.c_str()));
    return out;
}

Vector decode_f64(std::string_view text) {
    std::vector<unsigned char> bytes(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0)
        throw std::invalid_argument("invalid base64 payload");
    if (len % 8 != 0) throw std::invalid_argument("base64 payload is not a whole number of doubles");
    Vector out(len / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&out[i], &bits, 8);
    }
    return out;
}

// ---- network spec -----------------------------------------------------------

Json to_json(const LayerSpec& l) {
    Json j;
    j["type"] = std::string(to_string(l.kind));
    if (!l.name.empty()) j["name"] = l.name;
    switch (l.kind) {
        case LayerKind::dense:
            j["in"] = l.in;
            j["out"] = l.out;
            j["bias"] = l.bias;
            break;
        case LayerKind::linear_output:
            j["in"] = l.in;
            j["out"] = l.out;
            break;
        case LayerKind::conv2d:
            j["kernel"] = {l.kernel_h, l.kernel_w};
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["pad"] = l.pad;
            j["bias"] = l.bias;
            break;
        case LayerKind::avgpool2d:
        case LayerKind::maxpool2d:
            j["size"] = l.pool;
            break;
        case LayerKind::batchnorm2d:
            j["channels"] = l.channels;
            break;
        case LayerKind::dropout:
            j["rate"] = l.rate;
            break;
        case LayerKind::relu:
            break;
    }
    return j;
}

LayerSpec layer_spec_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("type")) throw std::invalid_argument("layer: missing 'type'");
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("type").get<std::string>());
    const std::string ctx = "layer '" + j.at("type").get<std::string>() + "'";
    if (j.contains("name")) l.name = j.at("name").get<std::string>();
    switch (l.kind) {
        case LayerKind::dense:
            require_known_keys(j, {"type", "name", "in", "out", "bias"}, ctx);
            l.in = j.at("in").get<std::size_t>();
            l.out = j.at("out").get<std::size_t>();
            l.bias = j.value("bias", true);
            break;
        case LayerKind::linear_output:
            require_known_keys(j, {"type", "name", "in", "out"}, ctx);
            l.in = j.at("in").get<std::size_t>();
            l.out = j.at("out").get<std::size_t>();
            l.bias = false;
            break;
        case LayerKind::conv2d: {
            require_known_keys(j, {"type", "name", "kernel", "in_channels", "out_channels", "pad", "bias"}, ctx);
            const auto k = j.at("kernel").get<std::vector<std::size_t>>();
            if (k.size() != 2) throw std::invalid_argument(ctx + ": 'kernel' must be [height, width]");
            l.kernel_h = k[0];
            l.kernel_w = k[1];
            l.in_channels = j.at("in_channels").get<std::size_t>();
            l.out_channels = j.at("out_channels").get<std::size_t>();
            l.pad = j.value("pad", std::size_t{0});
            l.bias = j.value("bias", true);
            break;
        }
        case LayerKind::avgpool2d:
        case LayerKind::maxpool2d:
            require_known_keys(j, {"type", "name", "size"}, ctx);
            l.pool = j.at("size").get<std::size_t>();
            break;
        case LayerKind::batchnorm2d:
            require_known_keys(j, {"type", "name", "channels"}, ctx);
            l.channels = j.at("channels").get<std::size_t>();
            break;
        case LayerKind::dropout:
            require_known_keys(j, {"type", "name", "rate"}, ctx);
            l.rate = j.at("rate").get<double>();
            break;
        case LayerKind::relu:
            require_known_keys(j, {"type", "name"}, ctx);
            break;
    }
    return l;
}

Json to_json(const NetworkSpec& s) {
    Json j;
    j["input_shape"] = s.input_shape;
    j["trunk"] = Json::array();
    for (const auto& l : s.trunk) j["trunk"].push_back(to_json(l));
    j["heads"] = Json::array();
    for (const auto& h : s.heads) {
        Json hj;
        hj["name"] = h.name;
        hj["target"] = std::string(to_string(h.target));
        hj["stopping_iteration"] = h.stopping_iteration;
        hj["layers"] = Json::array();
        for (const auto& l : h.layers) hj["layers"].push_back(to_json(l));
        j["heads"].push_back(hj);
    }
    return j;
}

NetworkSpec network_spec_from_json(const Json& j) {
    require_known_keys(j, {"input_shape", "trunk", "heads"}, "network");
    NetworkSpec s;
    s.input_shape = j.at("input_shape").get<Shape>();
    if (j.contains("trunk"))
        for (const auto& l : j.at("trunk")) s.trunk.push_back(layer_spec_from_json(l));
    for (const auto& hj : j.at("heads")) {
        require_known_keys(hj, {"name", "target", "stopping_iteration", "layers"}, "network head");
        HeadSpec h;
        h.name = hj.at("name").get<std::string>();
        h.target = target_transform_from_string(hj.value("target", std::string("identity")));
        h.stopping_iteration = hj.value("stopping_iteration", false);
        for (const auto& l : hj.at("layers")) h.layers.push_back(layer_spec_from_json(l));
        s.heads.push_back(std::move(h));
    }
    return s;
}

// ---- checkpoint -------------------------------------------------------------

namespace {

Json affine_to_json(const Affine& a) { return {{"shift", encode_f64(a.shift)}, {"scale", encode_f64(a.scale)}}; }

Affine affine_from_json(const Json& j) {
    require_known_keys(j, {"shift", "scale"}, "normalization");
    Affine a{decode_f64(j.at("shift").get<std::string>()), decode_f64(j.at("scale").get<std::string>())};
    if (a.shift.size() != a.scale.size()) throw std::invalid_argument("normalization: shift/scale length mismatch");
    return a;
}

}  // namespace

Json to_json(const Checkpoint& c) {
    Json j;
    j["format"] = "reglearn-checkpoint";
    j["version"] = 1;
    j["spec"] = to_json(c.spec);
    j["theta"] = encode_f64(c.theta);
    j["buffers"] = encode_f64(c.buffers);
    Json norm;
    norm["input"] = c.input.empty() ? Json(nullptr) : affine_to_json(c.input);
    norm["targets"] = Json::object();
    for (const auto& [name, t] : c.targets) {
        Json tj = affine_to_json(t.affine);
        tj["transform"] = std::string(to_string(t.transform));
        norm["targets"][name] = tj;
    }
    j["normalization"] = norm;
    j["history"] = Json::object();
    for (const auto& [stage, losses] : c.history) j["history"][stage] = encode_f64(losses);
    return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
    require_known_keys(j, {"format", "version", "spec", "theta", "buffers", "normalization", "history"}, "checkpoint");
    if (j.at("format") != "reglearn-checkpoint" || j.at("version") != 1)
        throw std::invalid_argument("checkpoint: unsupported format or version");
    Checkpoint c;
    c.spec = network_spec_from_json(j.at("spec"));
    c.theta = decode_f64(j.at("theta").get<std::string>());
    c.buffers = decode_f64(j.at("buffers").get<std::string>());
    const Json& norm = j.at("normalization");
    require_known_keys(norm, {"input", "targets"}, "checkpoint normalization");
    if (!norm.at("input").is_null()) c.input = affine_from_json(norm.at("input"));
    for (const auto& [name, tj] : norm.at("targets").items()) {
        Json copy = tj;
        TargetNormalization t;
        t.transform = target_transform_from_string(copy.at("transform").get<std::string>());
        copy.erase("transform");
        t.affine = affine_from_json(copy);
        c.targets[name] = t;
    }
    for (const auto& [stage, text] : j.at("history").items()) c.history[stage] = decode_f64(text.get<std::string>());

    const Network net(c.spec);
    if (c.theta.size() != net.parameter_count() || c.buffers.size() != net.buffer_count())
        throw std::invalid_argument("checkpoint: parameter count does not match network spec");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) { write_json_file(to_json(c), path); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json_file(path)); }

Json to_json(const ElmModel& m) { return {{"w", encode_f64(m.w)}, {"y", encode_f64(std::span<const double>(&m.y, 1))}}; }

ElmModel elm_from_json(const Json& j) {
    require_known_keys(j, {"w", "y"}, "elm");
    ElmModel m;
    m.w = decode_f64(j.at("w").get<std::string>());
    const Vector y = decode_f64(j.at("y").get<std::string>());
    if (y.size() != 1) throw std::invalid_argument("elm: 'y' must hold one value");
    m.y = y[0];
    return m;
}

// ---- files --------------------------------------------------------------------

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::runtime_error("cannot parse " + path.string() + ": " + e.what());
    }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace reglearn
