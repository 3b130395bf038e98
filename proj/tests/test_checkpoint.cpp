#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sfelab/checkpoint.hpp"
#include "sfelab/network.hpp"
#include "sfelab/rng.hpp"

using namespace sfelab;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
    Checkpoint ckpt;
    ckpt.set_meta("container", "test");
    ckpt.set_meta("note", "spaces are fine in values");
    Rng rng(4);
    Tensor a({3, 5});
    for (std::int64_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(-10.0f, 10.0f);
    Tensor b({7});
    for (std::int64_t i = 0; i < b.size(); ++i) b[i] = rng.normal();
    ckpt.add("alpha", a);
    ckpt.add("beta", b);

    const std::string path = temp_path("sfelab_ckpt_test.sfel");
    ckpt.save(path);
    const Checkpoint back = Checkpoint::load(path);

    CHECK(back.meta_or("container", "") == "test");
    CHECK(back.meta_or("note", "") == "spaces are fine in values");
    REQUIRE(back.tensors().size() == 2);
    const Tensor& a2 = back.require("alpha");
    CHECK(a2.shape() == a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a2[i] == a[i]);
    const Tensor& b2 = back.require("beta");
    for (std::int64_t i = 0; i < b.size(); ++i) CHECK(b2[i] == b[i]);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects wrong magic and truncation") {
    const std::string path = temp_path("sfelab_ckpt_bad.sfel");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE" << std::string(16, '\0');
    }
    CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("magic"), std::runtime_error);

    Checkpoint ckpt;
    ckpt.add("t", Tensor({4}, {1, 2, 3, 4}));
    ckpt.save(path);
    // chop the payload
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 8);
    CHECK_THROWS_WITH_AS(Checkpoint::load(path), doctest::Contains("truncated"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects duplicate names and bad keys") {
    Checkpoint ckpt;
    ckpt.add("x", Tensor({1}));
    CHECK_THROWS(ckpt.add("x", Tensor({1})));
    CHECK_THROWS(ckpt.add("has space", Tensor({1})));
    CHECK_THROWS(ckpt.set_meta("bad key", "v"));
}

TEST_CASE("network state round-trips through a checkpoint") {
    Network net({LayerSpec::dense(4), LayerSpec::batchnorm(0.8f), LayerSpec::activation(Activation::tanh)},
                {3}, 99);
    Rng rng(5);
    Tensor warm({8, 3});
    for (std::int64_t i = 0; i < warm.size(); ++i) warm[i] = rng.uniform(-2.0f, 2.0f);
    net.forward(warm, Mode::train);  // move running stats off init

    Checkpoint ckpt;
    checkpoint_put_network(ckpt, "net", net);
    const std::string path = temp_path("sfelab_ckpt_net.sfel");
    ckpt.save(path);

    Network restored({LayerSpec::dense(4), LayerSpec::batchnorm(0.8f), LayerSpec::activation(Activation::tanh)},
                     {3}, 1234);
    checkpoint_get_network(Checkpoint::load(path), "net", restored);

    Tensor x({2, 3}, {0.1f, -0.2f, 0.3f, 0.4f, 0.5f, -0.6f});
    Tensor y1 = net.forward(x, Mode::infer);
    Tensor y2 = restored.forward(x, Mode::infer);
    for (std::int64_t i = 0; i < y1.size(); ++i) CHECK(y1[i] == y2[i]);
    std::remove(path.c_str());
}
