#include <gtest/gtest.h>

#include "mixalign/config.hpp"

using namespace mixalign;

TEST(Config, TextRoundTripIsLossless) {
  TrainConfig c;
  c.seed = 42;
  c.optim.lr = 0.1 + 0.2;  // not representable in short decimal form
  c.mixstyle.alpha = 1.0 / 3.0;
  c.augment.erase_area = {0.011, 0.033};
  c.kd_enabled = false;
  c.out_dir = "runs/some where";
  const std::string text = to_text(c);
  const TrainConfig back = parse_config(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.optim.lr, c.optim.lr);
  EXPECT_EQ(back.mixstyle.alpha, c.mixstyle.alpha);
  EXPECT_EQ(back.out_dir, c.out_dir);
  EXPECT_FALSE(back.kd_enabled);
}

TEST(Config, AbsentKeysKeepDefaultsAndCommentsAreIgnored) {
  const TrainConfig c = parse_config("# header\n[run]\nepochs = 3   # short\n\n[kd]\ntemperature=4\n");
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.kd.temperature, 4.0);
  EXPECT_EQ(c.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(to_text(parse_config("")), to_text(TrainConfig{}));
}

TEST(Config, MalformedInputIsRejected) {
  EXPECT_THROW(parse_config("[run]\nepochz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[runn]\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nepochs = 3\nepochs = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("epochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nepochs = three\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nepochs\n"), ConfigError);
  EXPECT_THROW(parse_config("[kd]\nenabled = yes\n"), ConfigError);
  EXPECT_THROW(parse_config("[run]\nepochs = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("[ema]\nmomentum = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[augment]\nhflip_p = 1.5\n"), ConfigError);
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
  TrainConfig a, b;
  b.out_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, ComponentsToggleExactlyTheirModules) {
  EXPECT_EQ(parse_component("all"), Component::All);
  EXPECT_STREQ(component_name(Component::Kd), "kd");
  EXPECT_THROW(parse_component("cbam"), ConfigError);

  const TrainConfig none = with_components(TrainConfig{}, Component::None);
  EXPECT_FALSE(none.mixstyle_enabled || none.align_enabled || none.kd_enabled);
  const TrainConfig ms = with_components(TrainConfig{}, Component::MixStyle);
  EXPECT_TRUE(ms.mixstyle_enabled);
  EXPECT_FALSE(ms.align_enabled || ms.kd_enabled);
  const TrainConfig al = with_components(TrainConfig{}, Component::Align);
  EXPECT_TRUE(al.align_enabled);
  EXPECT_FALSE(al.mixstyle_enabled || al.kd_enabled);
  const TrainConfig kd = with_components(TrainConfig{}, Component::Kd);
  EXPECT_TRUE(kd.kd_enabled);
  EXPECT_FALSE(kd.mixstyle_enabled || kd.align_enabled);
  const TrainConfig all = with_components(TrainConfig{}, Component::All);
  EXPECT_TRUE(all.mixstyle_enabled && all.align_enabled && all.kd_enabled);
}
