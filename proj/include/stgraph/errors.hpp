#pragma once

#include <stdexcept>
#include <string>

namespace stg {

// Common base so the harness can catch the whole family at one boundary and
// map it to an episode failure cause instead of crashing the process.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A geometric operation received a region with no usable samples (empty mask,
// all-invalid depth, empty point set).
class EmptyRegion : public Error {
public:
    using Error::Error;
};

// Two containers that must agree in size/shape do not (mask vs depth grid,
// mask smaller than the patch grid, malformed image buffers).
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// A graph update was fed a timestamp that does not advance the graph clock.
class StaleStep : public Error {
public:
    using Error::Error;
};

// An identifier was looked up that the graph/world has never seen.
class UnknownObject : public Error {
public:
    using Error::Error;
};

// The goal references objects or relations that cannot exist in the current
// world, or the goal's support ordering is cyclic.
class UnsatisfiableGoal : public Error {
public:
    using Error::Error;
};

// A directive names a target the executor cannot ground in the scene graph.
class UnresolvedTarget : public Error {
public:
    using Error::Error;
};

// The remote planner reply could not be parsed into a well-formed directive
// after all retries were spent.
class MalformedDirective : public Error {
public:
    using Error::Error;
};

// Transport-level failure talking to the remote planner endpoint.
class TransportError : public Error {
public:
    using Error::Error;
};

// The remote planner did not answer within the configured deadline.
class TimeoutError : public Error {
public:
    using Error::Error;
};

// The closed loop hit the per-step replanning budget without producing a
// directive that passed verification.
class ReplanBudgetExhausted : public Error {
public:
    using Error::Error;
};

// Replaying a recorded episode produced a state that disagrees with the
// record. Carries the first divergent step for diagnostics.
class ReplayDivergence : public Error {
public:
    ReplayDivergence(const std::string& what, int step)
        : Error(what), divergent_step(step) {}
    int divergent_step;
};

// Bad task file, bad CLI arguments, bad environment configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace stg
