#pragma once

// Indexing of observation histories.
//
// History-tree indexing: a stage-n history (x_1..x_n) has index
// sum_i x_i K^(n-i), so the children of index j are j*K + x.
//
// Count-vector indexing: for exchangeable (iid) models a history is
// summarised by its symbol counts; CountLattice enumerates the count
// vectors of every stage in lexicographic order.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqopt/model.hpp"

namespace seqopt {

// K^n, or nullopt on overflow of 2^62.
std::optional<std::size_t> history_count(int K, int n);

std::size_t history_index(std::span<const Symbol> h, int K);
History decode_history(std::size_t index, int n, int K);

// "1:0:1"; the empty history formats as "".
std::string format_history(std::span<const Symbol> h);
History parse_history(const std::string& text);

std::vector<int> symbol_counts(std::span<const Symbol> h, int K);
std::string format_counts(std::span<const int> counts);
std::vector<int> parse_counts(const std::string& text);

class CountLattice {
 public:
  CountLattice(int alphabet_size, int max_stage);

  int alphabet() const { return K_; }
  int max_stage() const { return max_stage_; }
  std::size_t size(int n) const { return stages_.at(static_cast<std::size_t>(n)).states; }
  std::size_t total_states() const;

  std::span<const int> counts(int n, std::size_t index) const;
  // Index at stage n+1 of counts(n, index) + e_symbol.
  std::size_t child(int n, std::size_t index, Symbol symbol) const;
  // Number of histories sharing these counts (multinomial coefficient).
  double multiplicity(int n, std::size_t index) const;
  std::optional<std::size_t> find(std::span<const int> counts) const;

  // Number of count states over stages 0..max_stage, or nullopt on overflow.
  static std::optional<std::size_t> state_count(int alphabet_size, int max_stage);

 private:
  struct Stage {
    std::size_t states = 0;
    std::vector<int> counts;  // states * K
    std::vector<std::uint32_t> children;  // states * K, filled for n < max_stage
    std::vector<double> multiplicity;
  };

  // Position of counts (summing to n) in the stage's enumeration order.
  std::size_t rank(std::span<const int> counts, int n) const;

  int K_;
  int max_stage_;
  std::vector<Stage> stages_;
  std::vector<std::size_t> binom_;  // C(a, b) at a * (K + 1) + b
};

}  // namespace seqopt
