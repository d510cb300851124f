#include "panelscope/checkpoint.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <limits>

#include "support.hpp"

namespace panelscope {
namespace {

TEST(CheckpointTest, BitExactRoundTrip) {
    testutil::TempDir dir;
    Checkpoint ck{init_params(42, 10, 7), {}, {}};
    ck.config.hidden_units = 7;
    ck.config.seed = 42;
    ck.params.b2(3) = std::numeric_limits<double>::denorm_min();
    ck.params.b1(0) = -0.0;
    save_checkpoint(dir / "m.ckpt", ck);
    auto back = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(back, ck);
    EXPECT_TRUE(std::signbit(back.params.b1(0)));
    auto ta = ck.params.tensors();
    auto tb = back.params.tensors();
    for (std::size_t t = 0; t < 4; ++t)
        EXPECT_EQ(std::memcmp(ta[t].data(), tb[t].data(), ta[t].size_bytes()), 0);
}

TEST(CheckpointTest, StandardizerSurvives) {
    testutil::TempDir dir;
    Checkpoint ck{init_params(1, 3, 4), {}, {{1, 2, 3}, {0.5, 1, 2}}};
    ck.config.hidden_units = 4;
    ck.config.standardize = true;
    save_checkpoint(dir / "m.ckpt", ck);
    EXPECT_EQ(load_checkpoint(dir / "m.ckpt"), ck);
}

TEST(CheckpointTest, RejectsForeignAndTruncatedFiles) {
    testutil::TempDir dir;
    std::ofstream(dir / "junk") << "not a model";
    EXPECT_THROW(load_checkpoint(dir / "junk"), ParseError);
    EXPECT_THROW(load_checkpoint(dir / "absent"), NotFoundError);

    Checkpoint ck{init_params(1, 3, 4), {}, {}};
    ck.config.hidden_units = 4;
    save_checkpoint(dir / "m.ckpt", ck);
    auto size = std::filesystem::file_size(dir / "m.ckpt");
    std::filesystem::resize_file(dir / "m.ckpt", size - 9);
    EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), Error);
}

}  // namespace
}  // namespace panelscope
