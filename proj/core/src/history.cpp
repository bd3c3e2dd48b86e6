#include "seqopt/history.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "seqopt/error.hpp"

namespace seqopt {

std::optional<std::size_t> history_count(int K, int n) {
  constexpr std::size_t kLimit = std::size_t{1} << 62;
  std::size_t count = 1;
  for (int i = 0; i < n; ++i) {
    if (count > kLimit / static_cast<std::size_t>(K)) return std::nullopt;
    count *= static_cast<std::size_t>(K);
  }
  return count;
}

std::size_t history_index(std::span<const Symbol> h, int K) {
  std::size_t index = 0;
  for (Symbol x : h) index = index * static_cast<std::size_t>(K) + static_cast<std::size_t>(x);
  return index;
}

History decode_history(std::size_t index, int n, int K) {
  History h(static_cast<std::size_t>(n));
  for (int i = n - 1; i >= 0; --i) {
    h[static_cast<std::size_t>(i)] = static_cast<Symbol>(index % static_cast<std::size_t>(K));
    index /= static_cast<std::size_t>(K);
  }
  return h;
}

std::string format_history(std::span<const Symbol> h) {
  std::string out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (i) out += ':';
    out += std::to_string(h[i]);
  }
  return out;
}

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  if (text.empty()) return out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ':')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, std::string("cannot parse ") + what + " '" + text + "'");
    }
  }
  return out;
}

}  // namespace

History parse_history(const std::string& text) { return parse_int_list(text, "history"); }

std::vector<int> symbol_counts(std::span<const Symbol> h, int K) {
  std::vector<int> counts(static_cast<std::size_t>(K), 0);
  for (Symbol x : h) {
    if (x < 0 || x >= K) throw Error(ErrorKind::domain, "symbol outside alphabet");
    ++counts[static_cast<std::size_t>(x)];
  }
  return counts;
}

std::string format_counts(std::span<const int> counts) { return format_history(counts); }

std::vector<int> parse_counts(const std::string& text) { return parse_int_list(text, "counts"); }

namespace {

void enumerate_compositions(int remaining, int position, std::vector<int>& current,
                            std::vector<int>& out) {
  const int K = static_cast<int>(current.size());
  if (position == K - 1) {
    current[static_cast<std::size_t>(position)] = remaining;
    out.insert(out.end(), current.begin(), current.end());
    return;
  }
  for (int v = remaining; v >= 0; --v) {
    current[static_cast<std::size_t>(position)] = v;
    enumerate_compositions(remaining - v, position + 1, current, out);
  }
}

}  // namespace

std::optional<std::size_t> CountLattice::state_count(int alphabet_size, int max_stage) {
  // sum_{n=0}^{N} C(n+K-1, K-1) = C(N+K, K)
  long double total = 1.0L;
  for (int i = 1; i <= alphabet_size; ++i) {
    total = total * static_cast<long double>(max_stage + i) / static_cast<long double>(i);
  }
  if (total > 4e18L) return std::nullopt;
  return static_cast<std::size_t>(std::llround(static_cast<double>(total)));
}

CountLattice::CountLattice(int alphabet_size, int max_stage)
    : K_(alphabet_size), max_stage_(max_stage), stages_(static_cast<std::size_t>(max_stage) + 1) {
  const auto K = static_cast<std::size_t>(K_);
  const auto rows = static_cast<std::size_t>(max_stage_ + K_) + 1;
  binom_.assign(rows * (K + 1), 0);
  for (std::size_t a = 0; a < rows; ++a) {
    binom_[a * (K + 1)] = 1;
    for (std::size_t b = 1; b <= std::min(a, K); ++b)
      binom_[a * (K + 1) + b] = binom_[(a - 1) * (K + 1) + b - 1] + (b < a ? binom_[(a - 1) * (K + 1) + b] : 0);
  }

  std::vector<int> current(K);
  for (int n = 0; n <= max_stage; ++n) {
    auto& stage = stages_[static_cast<std::size_t>(n)];
    enumerate_compositions(n, 0, current, stage.counts);
    stage.states = stage.counts.size() / K;
    stage.multiplicity.assign(stage.states, n == 0 ? 1.0 : 0.0);
  }
  std::vector<int> key(K);
  for (int n = 0; n < max_stage; ++n) {
    auto& stage = stages_[static_cast<std::size_t>(n)];
    auto& next = stages_[static_cast<std::size_t>(n) + 1];
    stage.children.resize(stage.states * K);
    for (std::size_t s = 0; s < stage.states; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        std::copy_n(stage.counts.begin() + static_cast<std::ptrdiff_t>(s * K), K, key.begin());
        ++key[k];
        const std::size_t c = rank(key, n + 1);
        stage.children[s * K + k] = static_cast<std::uint32_t>(c);
        // multinomial coefficients by Pascal's rule
        next.multiplicity[c] += stage.multiplicity[s];
      }
    }
  }
}

std::size_t CountLattice::rank(std::span<const int> counts, int n) const {
  // Enumeration takes the first coordinate from n downwards, then recurses;
  // skipping the values above c_i jumps C(r - c_i + K - i - 2, K - i - 1) states.
  const auto K = static_cast<std::size_t>(K_);
  std::size_t index = 0;
  int remaining = n;
  for (std::size_t i = 0; i + 1 < K; ++i) {
    const int c = counts[i];
    if (c < remaining) {
      const auto a = static_cast<std::size_t>(remaining - c) + K - i - 2;
      index += binom_[a * (K + 1) + (K - i - 1)];
    }
    remaining -= c;
  }
  return index;
}

std::size_t CountLattice::total_states() const {
  std::size_t total = 0;
  for (const auto& s : stages_) total += s.states;
  return total;
}

std::span<const int> CountLattice::counts(int n, std::size_t index) const {
  const auto& stage = stages_.at(static_cast<std::size_t>(n));
  const auto K = static_cast<std::size_t>(K_);
  return std::span<const int>(stage.counts).subspan(index * K, K);
}

std::size_t CountLattice::child(int n, std::size_t index, Symbol symbol) const {
  const auto& stage = stages_[static_cast<std::size_t>(n)];
  return stage.children[index * static_cast<std::size_t>(K_) + static_cast<std::size_t>(symbol)];
}

double CountLattice::multiplicity(int n, std::size_t index) const {
  return stages_[static_cast<std::size_t>(n)].multiplicity[index];
}

std::optional<std::size_t> CountLattice::find(std::span<const int> counts) const {
  if (static_cast<int>(counts.size()) != K_) return std::nullopt;
  int n = 0;
  for (int c : counts) {
    if (c < 0) return std::nullopt;
    n += c;
  }
  if (n > max_stage_) return std::nullopt;
  return rank(counts, n);
}

}  // namespace seqopt
