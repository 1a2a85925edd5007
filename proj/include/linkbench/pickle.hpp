#pragma once

// Reader for the subset of Python's pickle format used by the Planetoid
// dataset files: numpy arrays, scipy CSR matrices and dict/defaultdict
// adjacency lists, written with protocols 2 through 4. Nothing is executed;
// GLOBAL/REDUCE/NEWOBJ/BUILD produce inert Instance records that the
// decoders below interpret.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkbench/sparse.hpp"

namespace linkbench::pickle {

struct Object;
using Ref = std::shared_ptr<Object>;

struct Object {
  enum class Kind { none, boolean, integer, floating, bytes, tuple, list, dict, global, instance };

  Kind kind = Kind::none;
  bool flag = false;
  std::int64_t integer = 0;
  double floating = 0.0;
  std::string text;                          // bytes/str payload, or "module name" for globals
  std::vector<Ref> items;                    // tuple and list elements
  std::vector<std::pair<Ref, Ref>> entries;  // dict entries; also items set on instances
  Ref callable;                              // instance: the GLOBAL it was built from
  Ref args;                                  // instance: constructor argument tuple
  Ref state;                                 // instance: BUILD argument

  bool is(Kind k) const { return kind == k; }
};

/// Parses one pickle. Throws DataError with the byte offset on malformed input.
Ref parse(std::span<const std::uint8_t> bytes);
Ref parse_file(const std::filesystem::path& path);

struct NdArray {
  std::vector<std::size_t> shape;
  std::vector<double> values;  // row-major, converted to double
};

/// numpy.ndarray rebuilt via numpy.core.multiarray._reconstruct.
NdArray to_ndarray(const Ref& obj);

/// scipy.sparse.csr_matrix; duplicate entries are summed.
SparseMatrix to_csr(const Ref& obj);

/// dict or defaultdict mapping int -> list[int].
std::vector<std::pair<std::int64_t, std::vector<std::int64_t>>> to_adjacency(const Ref& obj);

}  // namespace linkbench::pickle
