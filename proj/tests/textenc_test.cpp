// Copyright 2026 The hwbc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "hwbc/textenc.hpp"

namespace hwbc {
namespace {

TEST(Fnv1a, PublishedTestVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, LowercasesAndSplitsOnNonAlphanumerics) {
  EXPECT_EQ(tokenize("  Walk,FORWARD!  then-stop. "),
            (std::vector<std::string>{"walk", "forward", "then", "stop"}));
  EXPECT_TRUE(tokenize(" .,;!? ").empty());
}

TEST(EmbedText, NormalizationContract) {
  const auto a = embed_text("walk forward");
  const auto b = embed_text("walk  FORWARD.");
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), kTextDim);
  EXPECT_NEAR(a.norm(), 1.0, 1e-12);
  EXPECT_NEAR(similarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(embed_text("forward walk"), a);
}

TEST(EmbedText, OverlappingPhrasesAreCloser) {
  const auto fwd = embed_text("a person walks forward");
  const double near = similarity(fwd, embed_text("a person walks ahead"));
  const double far = similarity(fwd, embed_text("clap hands"));
  EXPECT_GT(near, far);
  EXPECT_GT(near, 0.5);
}

TEST(EmbedText, EmptyTextRejected) {
  EXPECT_THROW(embed_text(""), InputError);
  EXPECT_THROW(embed_text("   ...  "), InputError);
}

TEST(EmbedText, DeterministicAcrossEncoderInstances) {
  const TextEncoder a, b;
  EXPECT_EQ(a.embed("a man waves his right hand"), b.embed("a man waves his right hand"));
  const TextEncoder other(123);
  EXPECT_LT(similarity(a.embed("wave"), other.embed("wave")), 0.5);
}

TEST(EmbedText, UnitNormOnManyInputs) {
  Rng rng(9);
  const std::string alphabet = "abcdefghij klmnop,.;QRST0123";
  for (int i = 0; i < 300; ++i) {
    std::string s = "x";
    const int len = 1 + static_cast<int>(rng.index(40));
    for (int c = 0; c < len; ++c) s.push_back(alphabet[rng.index(alphabet.size())]);
    const auto v = embed_text(s);
    EXPECT_TRUE(all_finite(v));
    EXPECT_NEAR(v.norm(), 1.0, 1e-9);
  }
}

TEST(Similarity, Properties) {
  const auto v = embed_text("jump");
  EXPECT_NEAR(similarity(v, -v), -1.0, 1e-15);
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    const Vector a = rng.normal_vector(16), b = rng.normal_vector(16);
    EXPECT_EQ(similarity(a, b), similarity(b, a));
    EXPECT_LE(std::abs(similarity(a, b)), 1.0);
  }
  EXPECT_THROW(similarity(Vector::Zero(3), Vector::Ones(3)), InputError);
  EXPECT_THROW(similarity(Vector::Ones(2), Vector::Ones(3)), InputError);
}

TEST(EmbeddingCache, RecomputesOnlyOnChange) {
  EmbeddingCache cache;
  cache.get("wave");
  cache.get("wave");
  cache.get("walk");
  cache.get("walk");
  cache.get("wave");
  EXPECT_EQ(cache.misses(), 3);
  EXPECT_EQ(cache.get("walk"), embed_text("walk"));
}

TEST(ParseScript, CommandListExample) {
  const auto s = parse_script(
      "A person walks forward briskly then stops: 4.0\n"
      "A man waves his right hand: 5.0\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text, "A person walks forward briskly then stops");
  EXPECT_EQ(s[0].duration, 4.0);
  EXPECT_EQ(s[1].text, "A man waves his right hand");
  EXPECT_EQ(s[1].duration, 5.0);
  EXPECT_EQ(script_duration(s), 9.0);
}

TEST(ParseScript, BlanksCommentsAndColons) {
  EXPECT_TRUE(parse_script("").empty());
  const auto s = parse_script("# header\n\n  time: 10:30 mark: 2.5  # note\r\n\nwave:1e0");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text, "time: 10:30 mark");
  EXPECT_EQ(s[0].duration, 2.5);
  EXPECT_EQ(s[1].duration, 1.0);
}

TEST(ParseScript, Errors) {
  EXPECT_THROW(parse_script("wave: -1"), InputError);
  EXPECT_THROW(parse_script("wave: 0"), InputError);
  EXPECT_THROW(parse_script("wave: inf"), InputError);
  try {
    parse_script("walk: 1\n\nno duration here\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_script("walk: 1.5s"), ParseError);
  EXPECT_THROW(parse_script(": 3"), ParseError);
}

}  // namespace
}  // namespace hwbc
