// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/mnist.hpp"

#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace sfelab {

namespace {

constexpr int kImageMagic = 2051;
constexpr int kLabelMagic = 2049;

std::string resolve(const std::string& path) {
    namespace fs = std::filesystem;
    if (fs::exists(path)) return path;
    if (fs::exists(path + ".gz")) return path + ".gz";
    throw std::runtime_error("mnist: file not found: " + path + " (also tried .gz)");
}

// gzread handles both gzip and plain streams, so the same reader covers
// raw and .gz files.
std::vector<std::uint8_t> read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("mnist: cannot open " + path);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    const bool ok = n == 0;
    gzclose(f);
    if (!ok) throw std::runtime_error("mnist: decompression failed for " + path);
    return out;
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

struct IdxFile {
    std::uint32_t magic;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

IdxFile parse_idx(const std::string& path, std::uint32_t expected_magic, const char* role) {
    const auto bytes = read_all(resolve(path));
    if (bytes.size() < 8) throw std::runtime_error("mnist: truncated " + std::string(role) + " file " + path);
    IdxFile f;
    f.magic = be32(bytes.data());
    if (f.magic != expected_magic) {
        throw std::runtime_error("mnist: bad magic number " + std::to_string(f.magic) + " in " + path +
                                 ", expected " + std::to_string(expected_magic));
    }
    const size_t ndims = f.magic == kImageMagic ? 3 : 1;
    const size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw std::runtime_error("mnist: truncated header in " + path);
    std::uint64_t total = 1;
    for (size_t i = 0; i < ndims; ++i) {
        f.dims.push_back(be32(bytes.data() + 4 + 4 * i));
        total *= f.dims.back();
    }
    if (bytes.size() - header != total)
        throw std::runtime_error("mnist: payload size mismatch in " + path + ": header promises " +
                                 std::to_string(total) + " bytes, file has " +
                                 std::to_string(bytes.size() - header));
    f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return f;
}

}  // namespace

ImageSet load_idx_pair(const std::string& image_path, const std::string& label_path) {
    const IdxFile images = parse_idx(image_path, kImageMagic, "image");
    const IdxFile labels = parse_idx(label_path, kLabelMagic, "label");
    const int n = static_cast<int>(images.dims[0]);
    const int h = static_cast<int>(images.dims[1]);
    const int w = static_cast<int>(images.dims[2]);
    if (labels.dims[0] != images.dims[0]) {
        throw std::runtime_error("mnist: image/label count mismatch: " + std::to_string(images.dims[0]) +
                                 " vs " + std::to_string(labels.dims[0]));
    }
    ImageSet set;
    set.images = Tensor({n, h, w, 1});
    for (std::int64_t i = 0; i < set.images.size(); ++i)
        set.images[i] = static_cast<float>(images.payload[static_cast<size_t>(i)]) / 255.0f;
    set.labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) set.labels[static_cast<size_t>(i)] = labels.payload[static_cast<size_t>(i)];
    set.validate();
    return set;
}

MnistData load_mnist(const std::string& dir_path) {
    const std::string d = dir_path.empty() ? "." : dir_path;
    MnistData data;
    data.train = load_idx_pair(d + "/train-images-idx3-ubyte", d + "/train-labels-idx1-ubyte");
    data.test = load_idx_pair(d + "/t10k-images-idx3-ubyte", d + "/t10k-labels-idx1-ubyte");
    return data;
}

}  // namespace sfelab
