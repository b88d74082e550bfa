#ifndef SYMDEC_SAPG_HPP
#define SYMDEC_SAPG_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "symdec/tensor.hpp"

namespace symdec::sapg {

/// Ordered object-class names; entries are trimmed and must be unique and non-empty.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> classes);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  const std::string& operator[](std::size_t i) const { return classes_[i]; }

 private:
  std::vector<std::string> classes_;
};

/// The 100 most frequent object classes used for the default prompt set.
Vocabulary default_vocabulary();

/// UTF-8 text, one class per line; blank lines are skipped.
Vocabulary read_vocabulary(const std::filesystem::path& path);

enum class Policy { sequential, shuffled };

Policy parse_policy(const std::string& name);
std::string policy_name(Policy policy);

/// M prompts, each the space-joined concatenation of K class names. Shared by every image.
struct PromptSet {
  std::vector<std::vector<std::string>> groups;
  int prompts = 0;
  int words = 0;
  Policy policy = Policy::sequential;
  std::uint64_t seed = 0;

  std::vector<std::string> texts() const;
};

/// Sequential policy consumes the vocabulary in order, K classes per prompt; shuffled applies a
/// seeded permutation first. No class appears in more than one prompt.
PromptSet build_prompt_set(const Vocabulary& vocab, int prompts, int words, Policy policy, std::uint64_t seed);

void write_prompt_set(const std::filesystem::path& path, const PromptSet& set);

/// Prompt embeddings Z_T [M, D_txt]; rows are updated by the optimizer once training starts.
struct TextTokens {
  Tensor<float> embeddings;
  bool trainable = true;

  Index count() const { return embeddings.dim(0); }
  Index dim() const { return embeddings.dim(1); }
};

/// 64-bit FNV-1a over the bytes of the lowercased word.
std::uint64_t fnv1a(const std::string& word);

/// Deterministic vector for one class name: counter-based normal draws keyed by (hash, seed).
std::vector<double> word_vector(const std::string& word, int dim, std::uint64_t seed);

/// Each prompt row is the L2-normalised sum of its class vectors.
TextTokens embed_prompts(const PromptSet& prompts, int dim, std::uint64_t seed);

/// Rank-2 CSYM file [M, D]; result is marked trainable.
TextTokens load_text_embeddings(const std::filesystem::path& path);

}  // namespace symdec::sapg

#endif  // SYMDEC_SAPG_HPP
