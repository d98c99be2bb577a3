#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gramgan/errors.hpp"
#include "gramgan/model.hpp"
#include "gramgan/trainer.hpp"
#include "tiny_model.hpp"

using namespace gramgan;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

void expect_same_params(Model& a, Model& b) {
  const auto pa = a.all_params();
  const auto pb = b.all_params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    ASSERT_EQ(pa[i]->value.size(), pb[i]->value.size()) << pa[i]->name;
    EXPECT_EQ(0, std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                             pa[i]->value.size() * sizeof(Real)))
        << pa[i]->name;
  }
}

Model trained(TrainMode mode, int steps) {
  Model m(testutil::tiny_config(mode));
  std::vector<Tensor> exemplars{testutil::stripes(24, 24)};
  if (mode == TrainMode::Conditional) exemplars.push_back(testutil::stripes(24, 24, 1.0));
  Trainer t(m, exemplars);
  for (int i = 0; i < steps; ++i) t.step();
  return m;
}

}  // namespace

TEST(Checkpoint, RoundTripSingle) {
  const auto dir = testutil::temp_dir("ckpt_single");
  Model m = trained(TrainMode::Single, 2);
  save_checkpoint(m, dir + "/a.ggan");
  Model back = load_checkpoint(dir + "/a.ggan");
  EXPECT_EQ(back.iteration, 2);
  EXPECT_EQ(back.adam_g.steps(), m.adam_g.steps());
  EXPECT_EQ(back.adam_d.moments().size(), m.adam_d.moments().size());
  expect_same_params(m, back);
  save_checkpoint(back, dir + "/b.ggan");
  EXPECT_EQ(slurp(dir + "/a.ggan"), slurp(dir + "/b.ggan"));
  EXPECT_EQ(file_sha256(dir + "/a.ggan"), file_sha256(dir + "/b.ggan"));
  EXPECT_FALSE(std::filesystem::exists(dir + "/a.ggan.partial"));
}

TEST(Checkpoint, RoundTripConditional) {
  const auto dir = testutil::temp_dir("ckpt_cond");
  Model m = trained(TrainMode::Conditional, 1);
  save_checkpoint(m, dir + "/a.ggan");
  Model back = load_checkpoint(dir + "/a.ggan", TrainMode::Conditional);
  expect_same_params(m, back);
  save_checkpoint(back, dir + "/b.ggan");
  EXPECT_EQ(slurp(dir + "/a.ggan"), slurp(dir + "/b.ggan"));
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const auto dir = testutil::temp_dir("ckpt_resume");
  Model straight = trained(TrainMode::Single, 4);
  Model half = trained(TrainMode::Single, 2);
  save_checkpoint(half, dir + "/half.ggan");
  Model resumed = load_checkpoint(dir + "/half.ggan");
  Trainer t(resumed, {testutil::stripes(24, 24)});
  t.step();
  t.step();
  expect_same_params(straight, resumed);
}

TEST(Checkpoint, ModeMismatch) {
  const auto dir = testutil::temp_dir("ckpt_mode");
  Model m(testutil::tiny_config(TrainMode::Single));
  save_checkpoint(m, dir + "/s.ggan");
  EXPECT_THROW(load_checkpoint(dir + "/s.ggan", TrainMode::Conditional), ModeError);
  EXPECT_NO_THROW(load_checkpoint(dir + "/s.ggan", TrainMode::Single));
}

TEST(Checkpoint, TruncationIsReported) {
  const auto dir = testutil::temp_dir("ckpt_trunc");
  Model m(testutil::tiny_config());
  save_checkpoint(m, dir + "/full.ggan");
  const std::string bytes = slurp(dir + "/full.ggan");
  for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(10), bytes.size() / 2,
                          bytes.size() - 1}) {
    spit(dir + "/cut.ggan", bytes.substr(0, cut));
    try {
      load_checkpoint(dir + "/cut.ggan");
      ADD_FAILURE() << "cut at " << cut << " loaded";
    } catch (const CheckpointError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
    }
  }
}

TEST(Checkpoint, CorruptionIsReported) {
  const auto dir = testutil::temp_dir("ckpt_corrupt");
  Model m(testutil::tiny_config());
  save_checkpoint(m, dir + "/full.ggan");
  std::string bytes = slurp(dir + "/full.ggan");

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir + "/magic.ggan", bad_magic);
  EXPECT_THROW(load_checkpoint(dir + "/magic.ggan"), CheckpointError);

  spit(dir + "/trailing.ggan", bytes + "x");
  EXPECT_THROW(load_checkpoint(dir + "/trailing.ggan"), CheckpointError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  spit(dir + "/version.ggan", bad_version);
  EXPECT_THROW(load_checkpoint(dir + "/version.ggan"), CheckpointError);

  EXPECT_THROW(load_checkpoint(dir + "/nothing.ggan"), CheckpointError);
}

TEST(Checkpoint, ShapeMismatchNamesTheRecord) {
  const auto dir = testutil::temp_dir("ckpt_shape");
  // Same header fields, different sampler width in the embedded config.
  auto narrow = testutil::tiny_config();
  Model m(narrow);
  save_checkpoint(m, dir + "/a.ggan");
  std::string bytes = slurp(dir + "/a.ggan");
  const std::string from = "\"sampler_width\": 8";
  const std::string to = "\"sampler_width\": 4";
  const auto pos = bytes.find(from);
  ASSERT_NE(pos, std::string::npos);
  bytes.replace(pos, from.size(), to);
  spit(dir + "/b.ggan", bytes);
  try {
    load_checkpoint(dir + "/b.ggan");
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("sampler.const"), std::string::npos) << e.what();
  }
}
