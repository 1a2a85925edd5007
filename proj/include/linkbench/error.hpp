#pragma once

#include <stdexcept>
#include <string>

namespace linkbench {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind {
  shape,
  index,
  domain,
  contract,
  config,
  data,
  split,
  sampling,
  metric,
  numeric,
  divergence,
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define LINKBENCH_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

LINKBENCH_DEFINE_ERROR(ShapeError, shape)
LINKBENCH_DEFINE_ERROR(IndexError, index)
LINKBENCH_DEFINE_ERROR(DomainError, domain)
LINKBENCH_DEFINE_ERROR(ContractError, contract)
LINKBENCH_DEFINE_ERROR(ConfigError, config)
LINKBENCH_DEFINE_ERROR(DataError, data)
LINKBENCH_DEFINE_ERROR(SplitError, split)
LINKBENCH_DEFINE_ERROR(SamplingError, sampling)
LINKBENCH_DEFINE_ERROR(MetricError, metric)
LINKBENCH_DEFINE_ERROR(NumericError, numeric)
LINKBENCH_DEFINE_ERROR(DivergenceError, divergence)
LINKBENCH_DEFINE_ERROR(FileError, io)

#undef LINKBENCH_DEFINE_ERROR

}  // namespace linkbench
