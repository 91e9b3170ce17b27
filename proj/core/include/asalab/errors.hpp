#pragma once

#include <stdexcept>
#include <string>

namespace asalab {

// Base class for all library errors. Subclasses map onto the CLI exit codes
// (see tools/): config/spec problems exit 2, data preconditions exit 3,
// missing artifacts exit 4, numeric failures exit 5.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or shape disagreement between an input and what a model expects.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required, or an internal numeric failure.
struct NumericError : Error {
  using Error::Error;
};

// A gradient-check oracle could not be trusted (e.g. the probed loss is not
// deterministic between two evaluations at the same parameters).
struct OracleError : Error {
  using Error::Error;
};

// Score label outside 1..5.
struct LabelError : Error {
  using Error::Error;
};

struct EmptyInputError : Error {
  using Error::Error;
};

// Invalid benchmark spec, reweight config or train plan parameters.
struct SpecError : Error {
  using Error::Error;
};

// Prompt example pool smaller than the requested example count.
struct InsufficientExamplesError : Error {
  using Error::Error;
};

// In-context examples too short to fit a bigram chain.
struct DegenerateCorpusError : Error {
  using Error::Error;
};

// Style vector paired with an instance of a different proficiency level.
struct LevelPairingError : Error {
  using Error::Error;
};

// Malformed file content; message carries the line number where applicable.
struct ParseError : Error {
  using Error::Error;
};

// A record parsed but violates a field constraint; message names the record.
struct ValidationError : Error {
  using Error::Error;
};

// Stage contract violation (e.g. synthesized instance in a quality-stage pool).
struct StageError : Error {
  using Error::Error;
};

// Invalid experiment configuration; message names the offending field.
struct ConfigError : Error {
  using Error::Error;
};

// A required on-disk artifact (dataset, checkpoint, run dir) is absent.
struct MissingArtifactError : Error {
  using Error::Error;
};

// An ablation aggregation is missing a required variant.
struct GridError : Error {
  using Error::Error;
};

}  // namespace asalab
