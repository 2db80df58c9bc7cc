#include "nr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "nr/errors.hpp"

namespace nr {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload is written as native little-endian floats");

namespace {

json layer_to_json(const Layer<float>& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::conv2d:
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            j["ksize"] = l.ksize;
            j["stride"] = l.stride;
            break;
        case LayerKind::maxpool2d:
            j["pool"] = l.pool;
            break;
        case LayerKind::dense:
            j["in_features"] = l.in_features;
            j["out_features"] = l.out_features;
            break;
        default:
            break;
    }
    return j;
}

Layer<float> layer_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv2d")
        return Layer<float>::conv(j.at("in_ch").get<int>(), j.at("out_ch").get<int>(), j.at("ksize").get<int>(),
                                  j.at("stride").get<int>());
    if (kind == "maxpool2d") return Layer<float>::maxpool(j.at("pool").get<int>());
    if (kind == "relu") return Layer<float>::relu_();
    if (kind == "flatten") return Layer<float>::flatten_();
    if (kind == "dense") return Layer<float>::dense(j.at("in_features").get<int>(), j.at("out_features").get<int>());
    throw InputError("checkpoint: unknown layer kind '" + kind + "'");
}

}  // namespace

void save_checkpoint(const NetworkF& net, const std::string& path, const json& meta) {
    json header;
    header["format"] = "nr-checkpoint";
    header["version"] = 1;
    header["endianness"] = "little";
    header["num_classes"] = net.num_classes;
    header["input_shape"] = net.input_shape;
    header["maskable_layers"] = net.maskable_layers;
    header["arch"] = arch_string(net);

    json layers = json::array();
    for (const auto& l : net.layers) layers.push_back(layer_to_json(l));
    header["layers"] = std::move(layers);

    json tensors = json::array();
    std::int64_t offset = 0;
    for (int li = 0; li < net.num_layers(); ++li) {
        const auto& l = net.layer(li);
        if (!l.has_params()) continue;
        for (const char* part : {"weight", "bias"}) {
            const Tensor<float>& t = part[0] == 'w' ? l.weight : l.bias;
            json tj;
            tj["name"] = "layer" + std::to_string(li) + "." + part;
            tj["shape"] = t.shape;
            tj["offset"] = offset;
            tensors.push_back(std::move(tj));
            offset += t.numel() * static_cast<std::int64_t>(sizeof(float));
        }
    }
    header["tensors"] = std::move(tensors);
    header["payload_bytes"] = offset;
    if (!meta.is_null()) header["meta"] = meta;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << header.dump() << "\n";
    for (const auto& l : net.layers) {
        if (!l.has_params()) continue;
        f.write(reinterpret_cast<const char*>(l.weight.ptr()),
                static_cast<std::streamsize>(l.weight.numel() * sizeof(float)));
        f.write(reinterpret_cast<const char*>(l.bias.ptr()),
                static_cast<std::streamsize>(l.bias.numel() * sizeof(float)));
    }
    if (!f) throw Error("write failed for " + path);
}

NetworkF load_checkpoint(const std::string& path, json* meta_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint " + path);
    std::string line;
    if (!std::getline(f, line)) throw TruncatedFileError(path + ": missing header line");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw InputError(path + ": bad checkpoint header: " + e.what());
    }
    if (header.value("format", "") != "nr-checkpoint")
        throw BadMagicError(path + ": not an nr-checkpoint file");
    if (header.value("endianness", "little") != "little")
        throw InputError(path + ": unsupported endianness tag");

    NetworkF net;
    net.num_classes = header.at("num_classes").get<int>();
    net.input_shape = header.at("input_shape").get<std::vector<int>>();
    net.maskable_layers = header.at("maskable_layers").get<std::vector<int>>();
    for (const auto& lj : header.at("layers")) net.layers.push_back(layer_from_json(lj));

    const std::int64_t payload_bytes = header.at("payload_bytes").get<std::int64_t>();
    std::vector<char> payload(static_cast<std::size_t>(payload_bytes));
    f.read(payload.data(), payload_bytes);
    if (f.gcount() != payload_bytes)
        throw TruncatedFileError(path + ": expected " + std::to_string(payload_bytes) + " payload bytes, got " +
                                 std::to_string(f.gcount()));

    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const auto shape = tj.at("shape").get<std::vector<int>>();
        const std::int64_t offset = tj.at("offset").get<std::int64_t>();
        const auto dot = name.find('.');
        const int li = std::stoi(name.substr(5, dot - 5));
        if (li < 0 || li >= net.num_layers()) throw InputError(path + ": tensor names unknown layer " + name);
        Tensor<float>& dst = name.substr(dot + 1) == "weight" ? net.layer(li).weight : net.layer(li).bias;
        if (dst.shape != shape)
            throw InputError(path + ": tensor " + name + " shape " + shape_str(shape) + " != architecture " +
                             shape_str(dst.shape));
        const std::int64_t bytes = dst.numel() * static_cast<std::int64_t>(sizeof(float));
        if (offset < 0 || offset + bytes > payload_bytes) throw TruncatedFileError(path + ": tensor " + name + " out of payload bounds");
        std::memcpy(dst.ptr(), payload.data() + offset, static_cast<std::size_t>(bytes));
    }

    trace_shapes(net);  // validates the layer chain composes
    if (meta_out) *meta_out = header.contains("meta") ? header["meta"] : json(nullptr);
    return net;
}

std::string arch_string(const NetworkF& net) {
    std::string s;
    for (int li : net.maskable_layers) {
        if (!s.empty()) s += "-";
        s += std::to_string(net.units_at(li));
    }
    return s;
}

std::string param_fingerprint(const NetworkF& net) {
    // FNV-1a over the parameter bytes
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](const Tensor<float>& t) {
        const unsigned char* p = reinterpret_cast<const unsigned char*>(t.ptr());
        const std::size_t n = static_cast<std::size_t>(t.numel()) * sizeof(float);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& l : net.layers)
        if (l.has_params()) {
            mix(l.weight);
            mix(l.bias);
        }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace nr
