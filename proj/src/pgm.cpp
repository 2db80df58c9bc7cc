#include "nr/pgm.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nr/errors.hpp"

namespace nr {

void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
    if (static_cast<std::int64_t>(pixels.size()) != static_cast<std::int64_t>(width) * height)
        throw ShapeError("pgm: pixel count != width*height");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::string> export_feature_maps(const NetworkF& net, const DataSource& data,
                                             const std::vector<std::int64_t>& sample_indices, int layer_index,
                                             const std::vector<int>& ranking, const std::string& out_dir) {
    const Layer<float>& l = net.layer(layer_index);
    if (l.kind != LayerKind::conv2d) throw InputError("feature maps are exported for conv layers only");
    const int units = l.output_units();
    if (static_cast<int>(ranking.size()) != units) throw InputError("ranking length != filter count");

    // forward up to the conv layer's post-bias output
    NetworkF prefix;
    prefix.input_shape = net.input_shape;
    prefix.num_classes = net.num_classes;
    for (int li = 0; li <= layer_index; ++li) prefix.layers.push_back(net.layer(li));
    const auto shape = trace_shapes(prefix).back();
    const int h = shape[1], w = shape[2];

    std::filesystem::create_directories(out_dir);
    Tensor<float> batch = data.make_batch(sample_indices);
    Tensor<float> maps = forward(prefix, batch);

    std::vector<std::string> written;
    for (std::size_t s = 0; s < sample_indices.size(); ++s) {
        for (int r = 0; r < units; ++r) {
            const int u = ranking[static_cast<std::size_t>(r)];
            const float* m = maps.ptr() + ((static_cast<std::int64_t>(s) * units) + u) * h * w;
            float lo = m[0], hi = m[0];
            for (int i = 1; i < h * w; ++i) {
                lo = std::min(lo, m[i]);
                hi = std::max(hi, m[i]);
            }
            const float span = hi > lo ? hi - lo : 1.0f;
            std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
            for (int i = 0; i < h * w; ++i)
                px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(255.0f * (m[i] - lo) / span));
            char name[96];
            std::snprintf(name, sizeof(name), "map%03lld_rank%02d_unit%02d.pgm",
                          static_cast<long long>(sample_indices[s]), r, u);
            const std::string path = out_dir + "/" + name;
            write_pgm(path, w, h, px);
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace nr
