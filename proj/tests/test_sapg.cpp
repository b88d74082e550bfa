#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "symdec/csym.hpp"
#include "symdec/sapg.hpp"
#include "test_util.hpp"

namespace symdec::sapg {
namespace {

using symdec::testing::ScratchDir;

TEST(Sapg, NineClassThreeByThreeExample) {
  const auto set = build_prompt_set(default_vocabulary(), 3, 3, Policy::sequential, 0);
  EXPECT_EQ(set.texts(), (std::vector<std::string>{"man pole stand", "white building sit", "table floor sky"}));
}

TEST(Sapg, SinglePromptSingleWord) {
  const auto set = build_prompt_set(default_vocabulary(), 1, 1, Policy::sequential, 0);
  EXPECT_EQ(set.texts(), (std::vector<std::string>{"man"}));
}

TEST(Sapg, DefaultSizeHasNoReuse) {
  const auto vocab = default_vocabulary();
  EXPECT_EQ(vocab.size(), 100u);
  for (Policy policy : {Policy::sequential, Policy::shuffled}) {
    const auto set = build_prompt_set(vocab, 25, 4, policy, 11);
    ASSERT_EQ(set.groups.size(), 25u);
    std::set<std::string> used;
    for (const auto& g : set.groups) {
      EXPECT_EQ(g.size(), 4u);
      for (const auto& w : g) EXPECT_TRUE(used.insert(w).second) << "reused " << w;
    }
    EXPECT_EQ(used.size(), 100u);
  }
}

TEST(Sapg, ShuffledPolicyIsSeeded) {
  const auto vocab = default_vocabulary();
  const auto a = build_prompt_set(vocab, 10, 3, Policy::shuffled, 5);
  EXPECT_EQ(a.texts(), build_prompt_set(vocab, 10, 3, Policy::shuffled, 5).texts());
  EXPECT_NE(a.texts(), build_prompt_set(vocab, 10, 3, Policy::shuffled, 6).texts());
  EXPECT_NE(a.texts(), build_prompt_set(vocab, 10, 3, Policy::sequential, 5).texts());
}

TEST(Sapg, CapacityErrorNamesBothQuantities) {
  try {
    build_prompt_set(default_vocabulary(), 26, 4, Policy::sequential, 0);
    FAIL() << "over-capacity prompt set accepted";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("104"), std::string::npos) << msg;
    EXPECT_NE(msg.find("100"), std::string::npos) << msg;
  }
  EXPECT_THROW(build_prompt_set(default_vocabulary(), 0, 4, Policy::sequential, 0), ConfigError);
}

TEST(Sapg, VocabularyValidation) {
  EXPECT_THROW(Vocabulary({"a", " a "}), ConfigError);
  EXPECT_THROW(Vocabulary({"a", "  "}), ConfigError);
  EXPECT_THROW(Vocabulary({}), ConfigError);
  EXPECT_EQ(Vocabulary({" street sign "})[0], "street sign");

  ScratchDir dir("symdec_vocab");
  {
    std::ofstream os(dir / "v.txt");
    os << "cat\n\n  dog \nstreet sign\n";
  }
  const auto v = read_vocabulary(dir / "v.txt");
  EXPECT_EQ(v.classes(), (std::vector<std::string>{"cat", "dog", "street sign"}));
  EXPECT_THROW(read_vocabulary(dir / "none.txt"), IoError);
}

TEST(Sapg, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
  EXPECT_EQ(fnv1a("FooBar"), fnv1a("foobar"));
}

TEST(Sapg, EmbeddingsAreDeterministicUnitRows) {
  const auto set = build_prompt_set(default_vocabulary(), 25, 4, Policy::sequential, 0);
  const auto a = embed_prompts(set, 64, 3);
  const auto b = embed_prompts(set, 64, 3);
  ASSERT_EQ(a.embeddings.shape(), (Shape{25, 64}));
  EXPECT_EQ(a.embeddings.vec(), b.embeddings.vec());
  EXPECT_TRUE(a.trainable);
  const auto m = a.embeddings.matrix();
  for (Index r = 0; r < m.rows(); ++r) EXPECT_NEAR(m.row(r).norm(), 1.0, 1e-6);
  EXPECT_NE(embed_prompts(set, 64, 4).embeddings.vec(), a.embeddings.vec());
}

TEST(Sapg, SingleWordEmbeddingsAreWellSeparated) {
  // 2081 distinct class names; the largest pairwise cosine must stay below 0.9.
  const int count = 2081, dim = 64;
  Eigen::MatrixXd v(count, dim);
  for (int i = 0; i < count; ++i) {
    const auto w = word_vector("class " + std::to_string(i), dim, 0);
    v.row(i) = Eigen::Map<const Eigen::RowVectorXd>(w.data(), dim).normalized();
  }
  const Eigen::MatrixXd gram = v * v.transpose();
  double worst = -1.0;
  for (int i = 0; i < count; ++i) {
    for (int j = i + 1; j < count; ++j) worst = std::max(worst, gram(i, j));
  }
  EXPECT_LT(worst, 0.9);
}

TEST(Sapg, TextEmbeddingFiles) {
  ScratchDir dir("symdec_text");
  std::mt19937_64 rng(1);
  const auto z = Tensor<float>::randn({25, 512}, rng);
  csym::write(dir / "text.csym", z);
  const auto t = load_text_embeddings(dir / "text.csym");
  EXPECT_EQ(t.embeddings.shape(), (Shape{25, 512}));
  EXPECT_EQ(t.embeddings.vec(), z.vec());
  EXPECT_TRUE(t.trainable);
  EXPECT_EQ(t.count(), 25);

  csym::write(dir / "rank3.csym", Tensor<float>({2, 3, 4}));
  EXPECT_THROW(load_text_embeddings(dir / "rank3.csym"), FormatError);
}

TEST(Sapg, PromptFileListsOnePromptPerLine) {
  ScratchDir dir("symdec_prompts");
  const auto set = build_prompt_set(default_vocabulary(), 3, 3, Policy::sequential, 0);
  write_prompt_set(dir / "p.txt", set);
  std::ifstream is(dir / "p.txt");
  const std::string text{std::istreambuf_iterator<char>(is), {}};
  EXPECT_EQ(text, "man pole stand\nwhite building sit\ntable floor sky\n");
}

TEST(Sapg, PolicyNames) {
  EXPECT_EQ(parse_policy("shuffled"), Policy::shuffled);
  EXPECT_EQ(policy_name(Policy::sequential), "sequential");
  EXPECT_THROW(parse_policy("random"), ConfigError);
}

}  // namespace
}  // namespace symdec::sapg
