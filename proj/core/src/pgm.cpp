#include "stlab/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace stlab::io {

void write_pgm(const std::string& path, const Tensor<double>& image, bool log_rescale) {
    if (image.rank() != 2) throw std::invalid_argument("write_pgm: rank-2 tensor required");
    const int64_t h = image.extent(0);
    const int64_t w = image.extent(1);

    std::vector<double> display(static_cast<size_t>(image.size()));
    for (int64_t i = 0; i < image.size(); ++i) {
        const double v = std::max(0.0, image[i]);
        display[static_cast<size_t>(i)] = log_rescale ? std::log(v + 1e-3) : v;
    }
    double lo = display[0], hi = display[0];
    for (double v : display) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
    out << "P5\n" << w << " " << h << "\n255\n";
    for (int64_t i = 0; i < image.size(); ++i) {
        const double t = (display[static_cast<size_t>(i)] - lo) / span;
        out.put(static_cast<char>(std::clamp(static_cast<int>(std::lround(t * 255.0)), 0, 255)));
    }
    if (!out) throw std::runtime_error("write_pgm: write failed for " + path);

    nlohmann::json side;
    side["min"] = lo;
    side["max"] = hi;
    side["log_rescale"] = log_rescale;
    side["log_offset"] = log_rescale ? 1e-3 : 0.0;
    std::ofstream sj(path + ".json", std::ios::trunc);
    sj << side.dump(2) << '\n';
}

}  // namespace stlab::io
