#include "sparselab/architecture.hpp"
#include "sparselab/error.hpp"

#include <doctest.h>

#include <cmath>
#include <string>

using namespace sparselab;

namespace {

std::string config_path(const char* name) { return std::string(SPARSELAB_SOURCE_DIR) + "/configs/" + name; }

} // namespace

TEST_CASE("lenet dimensions and parameter count") {
    const ArchitectureSpec a = lenet();
    const auto shapes = a.infer_shapes();
    CHECK(shapes[0] == Shape{6, 26, 26});
    CHECK(shapes[2] == Shape{6, 13, 13});
    CHECK(shapes[3] == Shape{16, 11, 11});
    CHECK(shapes[5] == Shape{16, 5, 5});
    CHECK(shapes[6] == Shape{400});
    CHECK(a.output_shape() == Shape{10});
    // 6*9+6, 16*54+16, 400*120+120, 120*84+84, 84*10+10
    CHECK(a.parameter_count() == 60 + 880 + 48120 + 10164 + 850);
    CHECK(a.parameter_count() == 60074);
    const auto p = a.prunable_layers();
    REQUIRE(p.size() == 5);
    CHECK(p[0].name == "conv1");
    CHECK(p[1].name == "conv2");
    CHECK(p[1].weight_shape == Shape{16, 6, 3, 3});
    CHECK(p[4].name == "fc3");
}

TEST_CASE("serialize then parse is the identity") {
    const ArchitectureSpec a = lenet();
    const std::string text = serialize_architecture(a);
    CHECK(parse_architecture(text) == a);
    CHECK(serialize_architecture(parse_architecture(text)) == text);
    CHECK(load_architecture(config_path("lenet.json")) == a);
}

TEST_CASE("shape errors name the offending layer") {
    const std::string bad = R"({"name":"bad","input_shape":[1,28,28],"layers":[
        {"kind":"conv2d","in_channels":1,"out_channels":6,"kernel_h":3,"kernel_w":3},
        {"kind":"flatten"},
        {"kind":"linear","in_features":400,"out_features":10}]})";
    try {
        parse_architecture(bad);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("layer 2 (linear)") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_architecture(R"({"name":"x","input_shape":[4],"layers":[{"kind":"dropout"}]})"),
                    ConfigError);
}

TEST_CASE("alexnet and vgg11 configs reproduce the published parameter counts") {
    const ArchitectureSpec alex = load_architecture(config_path("alexnet.json"));
    const ArchitectureSpec vgg = load_architecture(config_path("vgg11.json"));
    CHECK(alex.parameter_count() == 61100840);
    CHECK(vgg.parameter_count() == 132863336);
    CHECK(alex.prunable_layers().size() == 8);
    CHECK(load_architecture(config_path("vgg11_cifar10.json")).output_shape() == Shape{10});
}
