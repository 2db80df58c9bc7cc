#include "nr/model_zoo.hpp"

#include <cmath>
#include <random>

#include "nr/errors.hpp"

namespace nr {

template <typename T>
void init_params(Network<T>& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& l : net.layers) {
        if (!l.has_params()) continue;
        const int fan_in = l.kind == LayerKind::conv2d ? l.in_ch * l.ksize * l.ksize : l.in_features;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        for (std::int64_t i = 0; i < l.weight.numel(); ++i) l.weight[i] = static_cast<T>(dist(rng));
        l.bias.fill(T(0));
    }
}
template void init_params<float>(Network<float>&, std::uint64_t);
template void init_params<double>(Network<double>&, std::uint64_t);

NetworkF build_lenet(const std::array<int, 4>& widths, std::uint64_t seed) {
    for (int w : widths)
        if (w <= 0) throw InputError("architecture widths must be positive");
    NetworkF net;
    net.input_shape = {1, 28, 28};
    net.num_classes = 10;
    using L = Layer<float>;
    net.layers.push_back(L::conv(1, widths[0], 5));
    net.layers.push_back(L::maxpool(2));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::conv(widths[0], widths[1], 5));
    net.layers.push_back(L::maxpool(2));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::flatten_());
    net.layers.push_back(L::dense(widths[1] * 4 * 4, widths[2]));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::dense(widths[2], widths[3]));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::dense(widths[3], 10));
    net.maskable_layers = {0, 3, 7, 9};
    init_params(net, seed);
    trace_shapes(net);
    return net;
}

std::array<int, 4> parse_arch(const std::string& arch) {
    std::array<int, 4> w{};
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        std::size_t next = arch.find('-', pos);
        const std::string tok = next == std::string::npos ? arch.substr(pos) : arch.substr(pos, next - pos);
        try {
            w[static_cast<std::size_t>(i)] = std::stoi(tok);
        } catch (const std::exception&) {
            throw InputError("bad architecture string '" + arch + "' (want e.g. 10-20-100-25)");
        }
        if ((i < 3) != (next != std::string::npos))
            throw InputError("bad architecture string '" + arch + "' (want four dash-separated widths)");
        pos = next + 1;
    }
    return w;
}

static const char* kLayerNames[4] = {"conv1", "conv2", "fc1", "fc2"};

int resolve_layer(const NetworkF& net, const std::string& name_or_index) {
    for (std::size_t i = 0; i < net.maskable_layers.size() && i < 4; ++i)
        if (name_or_index == kLayerNames[i]) return net.maskable_layers[i];
    try {
        const int li = std::stoi(name_or_index);
        for (int m : net.maskable_layers)
            if (m == li) return li;
        throw InputError("layer index " + name_or_index + " is not maskable");
    } catch (const std::invalid_argument&) {
        throw InputError("unknown layer '" + name_or_index + "' (want conv1|conv2|fc1|fc2 or a maskable index)");
    }
}

std::string maskable_layer_name(const NetworkF& net, int layer_index) {
    for (std::size_t i = 0; i < net.maskable_layers.size(); ++i)
        if (net.maskable_layers[i] == layer_index)
            return i < 4 ? kLayerNames[i] : "maskable" + std::to_string(i);
    return "layer" + std::to_string(layer_index);
}

PlantedTask make_planted_mlp(int input_dim, int hidden, std::uint64_t seed) {
    if (input_dim < 2 || hidden < 2) throw InputError("planted MLP needs input_dim >= 2, hidden >= 2");
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> noise(0.0, 0.4);

    NetworkF net;
    net.input_shape = {input_dim};
    net.num_classes = 2;
    using L = Layer<float>;
    net.layers.push_back(L::dense(input_dim, hidden));
    net.layers.push_back(L::relu_());
    net.layers.push_back(L::dense(hidden, 2));
    net.maskable_layers = {0};

    auto& h = net.layers[0];
    auto& head = net.layers[2];
    // units 0/1 compute relu(+-(x0+x1)); the head combines them into the
    // exact decision function for label = [x0+x1 > 0]
    h.weight.fill(0.0f);
    h.bias.fill(0.0f);
    h.weight[0 * input_dim + 0] = 2.0f;
    h.weight[0 * input_dim + 1] = 2.0f;
    h.weight[1 * input_dim + 0] = -2.0f;
    h.weight[1 * input_dim + 1] = -2.0f;
    for (int u = 2; u < hidden; ++u)
        for (int d = 2; d < input_dim; ++d) h.weight[u * input_dim + d] = static_cast<float>(noise(rng));

    head.weight.fill(0.0f);
    head.bias.fill(0.0f);
    head.bias[0] = 0.05f;  // break argmax ties toward class 0
    head.weight[0 * hidden + 0] = -2.0f;  // class-0 logit
    head.weight[0 * hidden + 1] = 2.0f;
    head.weight[1 * hidden + 0] = 2.0f;  // class-1 logit
    head.weight[1 * hidden + 1] = -2.0f;
    std::normal_distribution<double> small(0.0, 0.05);
    for (int c = 0; c < 2; ++c)
        for (int u = 2; u < hidden; ++u) head.weight[c * hidden + u] = static_cast<float>(small(rng));

    return PlantedTask{std::move(net), 0, {0, 1}};
}

TensorSource make_planted_data(int n, int input_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor<float> x({n, input_dim});
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int d = 0; d < input_dim; ++d) x[i * input_dim + d] = static_cast<float>(u(rng));
        y[static_cast<std::size_t>(i)] = x[i * input_dim + 0] + x[i * input_dim + 1] > 0.0f ? 1 : 0;
    }
    return TensorSource(std::move(x), std::move(y));
}

namespace {

// 7x7 glyph stencils, upscaled 3x and jittered into the 28x28 frame.
const char* kGlyphs[10] = {
    ".11111."
    "1.....1"
    "1.....1"
    "1.....1"
    "1.....1"
    "1.....1"
    ".11111.",
    "...1..."
    "..11..."
    "...1..."
    "...1..."
    "...1..."
    "...1..."
    "..111..",
    ".1111.."
    "1....1."
    ".....1."
    "....1.."
    "..11..."
    ".1....."
    "111111.",
    "11111.."
    ".....1."
    "....1.."
    "..111.."
    ".....1."
    "1....1."
    ".1111..",
    "...11.."
    "..1.1.."
    ".1..1.."
    "1...1.."
    "111111."
    "....1.."
    "....1..",
    "111111."
    "1......"
    "11111.."
    ".....1."
    ".....1."
    "1....1."
    ".1111..",
    ".1111.."
    "1......"
    "1......"
    "11111.."
    "1....1."
    "1....1."
    ".1111..",
    "111111."
    ".....1."
    "....1.."
    "...1..."
    "..1...."
    ".1....."
    "1......",
    ".1111.."
    "1....1."
    "1....1."
    ".1111.."
    "1....1."
    "1....1."
    ".1111..",
    ".1111.."
    "1....1."
    "1....1."
    ".11111."
    ".....1."
    "1....1."
    ".1111..",
};

}  // namespace

Dataset make_synthetic_digits(std::int64_t count, std::uint64_t seed, const std::string& name) {
    Dataset ds;
    ds.name = name;
    ds.rows = 28;
    ds.cols = 28;
    ds.images.assign(static_cast<std::size_t>(count) * 28 * 28, 0);
    ds.labels.resize(static_cast<std::size_t>(count));

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> cls(0, 9);
    std::uniform_int_distribution<int> jitter(-2, 2);
    std::uniform_real_distribution<double> bright(0.7, 1.0);
    std::normal_distribution<double> noise(0.0, 12.0);

    for (std::int64_t i = 0; i < count; ++i) {
        const int y = cls(rng);
        ds.labels[static_cast<std::size_t>(i)] = y;
        const char* g = kGlyphs[y];
        const int dx = jitter(rng), dy = jitter(rng);
        const double scale = bright(rng);
        std::uint8_t* img = ds.images.data() + i * 784;
        for (int r = 0; r < 21; ++r)
            for (int c = 0; c < 21; ++c) {
                if (g[(r / 3) * 7 + c / 3] != '1') continue;
                const int rr = r + 3 + dy, cc = c + 3 + dx;
                img[rr * 28 + cc] = static_cast<std::uint8_t>(255.0 * scale);
            }
        for (int p = 0; p < 784; ++p) {
            const double v = static_cast<double>(img[p]) + noise(rng);
            img[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return ds;
}

}  // namespace nr
