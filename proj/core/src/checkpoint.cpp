// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#include "sfelab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfelab {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'E', 'L'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload I/O assumes a little-endian host");

void write_u32(std::ostream& os, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    os.write(buf, 4);
}

std::uint32_t read_u32(std::istream& is, const char* what) {
    char buf[4];
    if (!is.read(buf, 4)) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
    std::uint32_t v;
    std::memcpy(&v, buf, 4);
    return v;
}

bool valid_token(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c == ' ' || c == '\n' || c == '\r') return false;
    return true;
}

}  // namespace

void Checkpoint::set_meta(const std::string& key, std::string value) {
    if (!valid_token(key)) throw std::invalid_argument("checkpoint: invalid meta key '" + key + "'");
    if (value.find('\n') != std::string::npos)
        throw std::invalid_argument("checkpoint: meta value may not contain newlines");
    for (auto& kv : meta_) {
        if (kv.first == key) {
            kv.second = std::move(value);
            return;
        }
    }
    meta_.emplace_back(key, std::move(value));
}

const std::string* Checkpoint::find_meta(const std::string& key) const {
    for (const auto& kv : meta_)
        if (kv.first == key) return &kv.second;
    return nullptr;
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
    const std::string* v = find_meta(key);
    return v ? *v : fallback;
}

void Checkpoint::add(const std::string& name, Tensor t) {
    if (!valid_token(name)) throw std::invalid_argument("checkpoint: invalid tensor name '" + name + "'");
    if (find(name)) throw std::invalid_argument("checkpoint: duplicate tensor '" + name + "'");
    tensors_.emplace_back(name, std::move(t));
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& kv : tensors_)
        if (kv.first == name) return &kv.second;
    return nullptr;
}

const Tensor& Checkpoint::require(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
    return *t;
}

void Checkpoint::save(const std::string& path) const {
    std::ostringstream header;
    for (const auto& kv : meta_) header << "meta " << kv.first << " " << kv.second << "\n";
    std::uint64_t offset = 0;
    for (const auto& kv : tensors_) {
        header << "tensor " << kv.first << " " << kv.second.rank();
        for (int d : kv.second.shape()) header << " " << d;
        header << " " << offset << "\n";
        offset += static_cast<std::uint64_t>(kv.second.size()) * 4;
    }
    const std::string h = header.str();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& kv : tensors_) {
        os.write(reinterpret_cast<const char*>(kv.second.data()),
                 static_cast<std::streamsize>(kv.second.size() * 4));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    const std::uint32_t version = read_u32(is, "version");
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    const std::uint32_t header_len = read_u32(is, "header length");
    std::string header(header_len, '\0');
    if (!is.read(header.data(), header_len)) throw std::runtime_error("checkpoint: truncated header");

    Checkpoint ckpt;
    struct Entry {
        std::string name;
        std::vector<int> shape;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            ckpt.set_meta(key, value);
        } else if (tag == "tensor") {
            Entry e;
            int rank = -1;
            ls >> e.name >> rank;
            if (rank < 0 || !ls) throw std::runtime_error("checkpoint: malformed tensor line '" + line + "'");
            e.shape.resize(static_cast<size_t>(rank));
            for (int& d : e.shape) ls >> d;
            ls >> e.offset;
            if (!ls) throw std::runtime_error("checkpoint: malformed tensor line '" + line + "'");
            entries.push_back(std::move(e));
        } else {
            throw std::runtime_error("checkpoint: unknown header tag '" + tag + "'");
        }
    }

    std::uint64_t expected = 0;
    for (const Entry& e : entries) {
        if (e.offset != expected)
            throw std::runtime_error("checkpoint: inconsistent offset for tensor '" + e.name + "'");
        expected += static_cast<std::uint64_t>(shape_numel(e.shape)) * 4;
    }
    for (const Entry& e : entries) {
        const std::int64_t count = shape_numel(e.shape);
        FloatBuffer data(static_cast<size_t>(count));
        if (!is.read(reinterpret_cast<char*>(data.data()), count * 4))
            throw std::runtime_error("checkpoint: truncated payload for tensor '" + e.name + "'");
        ckpt.add(e.name, Tensor(e.shape, std::move(data)));
    }
    return ckpt;
}

void checkpoint_put_network(Checkpoint& ckpt, const std::string& prefix, Network& net) {
    for (const auto& p : net.state()) ckpt.add(prefix + "." + p.name, *p.value);
}

void checkpoint_get_network(const Checkpoint& ckpt, const std::string& prefix, Network& net) {
    for (auto& p : net.state()) {
        const Tensor& stored = ckpt.require(prefix + "." + p.name);
        if (!stored.same_shape(*p.value))
            throw std::runtime_error("checkpoint: shape mismatch restoring '" + prefix + "." + p.name +
                                     "': stored " + stored.shape_str() + ", expected " + p.value->shape_str());
        *p.value = stored;
    }
}

}  // namespace sfelab
