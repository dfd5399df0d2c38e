#pragma once

#include <stdexcept>
#include <string>

namespace srkit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shape / dimension violations.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Graph validation failures; the message names the offending node id.
class GraphError : public Error {
public:
    using Error::Error;
};

// Model file problems: bad manifest, version mismatch, blob offsets.
class FormatError : public Error {
public:
    using Error::Error;
};

// Quantization failures, including checked-mode accumulator overflow.
class QuantError : public Error {
public:
    using Error::Error;
};

// Filesystem / PNG / dataset ingestion problems.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace srkit
