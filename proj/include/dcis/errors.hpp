#pragma once

#include <stdexcept>
#include <string>

namespace dcis {

// Invalid input data or configuration. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure while executing an otherwise valid request (I/O, numerical
// divergence, missing capability). The CLI maps this to exit code 3.
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A requested feature is not available in this build.
class CapabilityError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// Training produced a non-finite loss; carries the offending batch index.
class DivergenceError : public PipelineError {
public:
    DivergenceError(const std::string& msg, long batch_index)
        : PipelineError(msg), batch_index(batch_index) {}

    long batch_index;
};

}  // namespace dcis
