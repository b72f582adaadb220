#include "sparselab/data_io.hpp"
#include "sparselab/kernels.hpp"
#include "sparselab/nn.hpp"

#include <chrono>
#include <cstdio>

using namespace sparselab;

int main(int argc, char** argv) {
    const auto root = default_data_root();
    Dataset train_set = load_mnist(root / "mnist", true);
    Dataset test_set = load_mnist(root / "mnist", false);
    const std::size_t epochs = argc > 1 ? std::stoul(argv[1]) : 1;
    RngStream init(0, StreamId::init);
    RngStream shuffle(0, StreamId::shuffle);
    Network net = init_network(lenet(), init);
    MaskSet masks = MaskSet::all_ones(net.arch);
    TrainOptions opt;
    opt.epochs = epochs;
    auto t0 = std::chrono::steady_clock::now();
    opt.on_epoch_end = [&](std::size_t e, const Network&) {
        auto t1 = std::chrono::steady_clock::now();
        std::printf("epoch %zu  %.2fs\n", e, std::chrono::duration<double>(t1 - t0).count());
        std::fflush(stdout);
    };
    auto r = train(net, masks, train_set, &test_set, opt, shuffle);
    for (std::size_t i = 0; i < r.epoch_accuracy.size(); ++i) {
        std::printf("epoch %zu loss %.5f acc %.2f (%s)\n", i + 1, r.epoch_loss[i], r.epoch_accuracy[i],
                    kernels::isa_name(kernels::active_isa()));
    }
}
