// Copyright 2026 sfelab contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfelab/network.hpp"
#include "sfelab/tensor.hpp"

namespace sfelab {

/// Binary container for tensors plus string metadata.
///
/// Layout: magic "SFEL", format version (u32 LE), header length (u32 LE),
/// UTF-8 header, then raw little-endian float32 payloads. The header holds
/// one line per entry:
///
///   meta <key> <value to end of line>
///   tensor <name> <rank> <d0> ... <d_{rank-1}> <byte offset>
///
/// Offsets are relative to the end of the header. Save/load round-trips
/// are bit-exact.
class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    void set_meta(const std::string& key, std::string value);
    const std::string* find_meta(const std::string& key) const;
    std::string meta_or(const std::string& key, const std::string& fallback) const;
    const std::vector<std::pair<std::string, std::string>>& meta() const { return meta_; }

    void add(const std::string& name, Tensor t);
    const Tensor* find(const std::string& name) const;
    const Tensor& require(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& tensors() const { return tensors_; }

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

private:
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::pair<std::string, Tensor>> tensors_;
};

/// Stores every state tensor of a network (weights, biases, batchnorm
/// scale/shift and running statistics) under "<prefix>.<param>".
void checkpoint_put_network(Checkpoint& ckpt, const std::string& prefix, Network& net);
/// Restores a network previously stored with checkpoint_put_network;
/// the network must already have the matching architecture.
void checkpoint_get_network(const Checkpoint& ckpt, const std::string& prefix, Network& net);

}  // namespace sfelab
