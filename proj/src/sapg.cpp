#include "symdec/sapg.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "symdec/csym.hpp"
#include "symdec/rng.hpp"

namespace symdec::sapg {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

/// Uniform in (0, 1) from the top 53 bits.
double unit(std::uint64_t bits) { return (double(bits >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> classes) {
  std::set<std::string> seen;
  for (auto& c : classes) {
    std::string t = trim(c);
    if (t.empty()) throw ConfigError("vocabulary: empty class name");
    if (!seen.insert(t).second) throw ConfigError("vocabulary: duplicate class '" + t + "'");
    classes_.push_back(std::move(t));
  }
  if (classes_.empty()) throw ConfigError("vocabulary: no classes");
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open vocabulary " + path.string());
  std::vector<std::string> classes;
  for (std::string line; std::getline(is, line);) {
    if (!trim(line).empty()) classes.push_back(line);
  }
  return Vocabulary(std::move(classes));
}

Policy parse_policy(const std::string& name) {
  if (name == "sequential") return Policy::sequential;
  if (name == "shuffled") return Policy::shuffled;
  throw ConfigError("unknown prompt policy '" + name + "' (expected sequential|shuffled)");
}

std::string policy_name(Policy policy) { return policy == Policy::sequential ? "sequential" : "shuffled"; }

std::vector<std::string> PromptSet::texts() const {
  std::vector<std::string> out;
  for (const auto& g : groups) {
    std::string s;
    for (const auto& w : g) {
      if (!s.empty()) s += ' ';
      s += w;
    }
    out.push_back(std::move(s));
  }
  return out;
}

PromptSet build_prompt_set(const Vocabulary& vocab, int prompts, int words, Policy policy, std::uint64_t seed) {
  if (prompts < 1 || words < 1) throw ConfigError("prompt set needs M >= 1 and K >= 1");
  const std::size_t needed = std::size_t(prompts) * std::size_t(words);
  if (needed > vocab.size()) {
    throw ConfigError("prompt set needs M*K = " + std::to_string(prompts) + "*" + std::to_string(words) + " = " +
                      std::to_string(needed) + " classes but the vocabulary has " + std::to_string(vocab.size()));
  }
  std::vector<std::size_t> order(vocab.size());
  std::iota(order.begin(), order.end(), 0);
  if (policy == Policy::shuffled) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  PromptSet set{{}, prompts, words, policy, seed};
  for (int m = 0; m < prompts; ++m) {
    std::vector<std::string> group;
    for (int k = 0; k < words; ++k) group.push_back(vocab[order[std::size_t(m) * words + k]]);
    set.groups.push_back(std::move(group));
  }
  return set;
}

void write_prompt_set(const std::filesystem::path& path, const PromptSet& set) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& t : set.texts()) os << t << '\n';
}

std::uint64_t fnv1a(const std::string& word) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : word) {
    h ^= std::uint64_t(std::tolower(ch));
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<double> word_vector(const std::string& word, int dim, std::uint64_t seed) {
  const std::uint64_t key = fnv1a(word) ^ splitmix64(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; i += 2) {
    const double u1 = unit(splitmix64(key + 2 * std::uint64_t(i)));
    const double u2 = unit(splitmix64(key + 2 * std::uint64_t(i) + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[std::size_t(i)] = r * std::cos(2 * std::numbers::pi * u2);
    if (i + 1 < dim) v[std::size_t(i) + 1] = r * std::sin(2 * std::numbers::pi * u2);
  }
  return v;
}

TextTokens embed_prompts(const PromptSet& prompts, int dim, std::uint64_t seed) {
  if (dim < 1) throw ConfigError("text embedding dimension must be >= 1");
  if (prompts.groups.empty()) throw ConfigError("embed_prompts: empty prompt set");
  Tensor<double> rows(Shape{Index(prompts.groups.size()), dim});
  for (std::size_t m = 0; m < prompts.groups.size(); ++m) {
    if (prompts.groups[m].empty()) throw ConfigError("embed_prompts: prompt " + std::to_string(m) + " is empty");
    auto row = rows.matrix().row(Index(m));
    for (const auto& w : prompts.groups[m]) {
      const auto v = word_vector(w, dim, seed);
      row += Eigen::Map<const Eigen::RowVectorXd>(v.data(), dim);
    }
    row.normalize();
  }
  return TextTokens{rows.cast<float>(), true};
}

TextTokens load_text_embeddings(const std::filesystem::path& path) { return TextTokens{csym::read(path, 2), true}; }

}  // namespace symdec::sapg
