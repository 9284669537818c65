#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace bdmp {

// Structural or semantic problem in a model document (bad syntax, dangling
// reference, invalid parameters). CLI maps this to exit code 2.
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure in a solver (singular system, unreachable tolerance).
// CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LeafKind { ExpFailure, OnDemand, PhaseErlang };
enum class GateKind { And, Or, PriorityAnd };

struct Leaf {
    std::string id;
    LeafKind kind = LeafKind::ExpFailure;
    double lambda_active = 0.0;   // failure rate while activated (exp)
    double lambda_standby = 0.0;  // failure rate in standby (exp), default 0
    double gamma = 0.0;           // failure-on-demand probability
    int erlang_phases = 1;        // number of phases (erlang)
    double erlang_rate = 0.0;     // per-phase rate (erlang)
    double mu = 0.0;              // repair rate; 0 = non-repairable
    bool initiator = false;
    std::string repair_group;     // empty = no shared repair crew

    bool repairable() const { return mu > 0.0; }
    bool operator==(const Leaf&) const = default;
};

struct Gate {
    std::string id;
    GateKind kind = GateKind::And;
    std::vector<std::string> children;  // order is significant for pand

    bool operator==(const Gate&) const = default;
};

struct Trigger {
    std::string origin;
    std::string target;

    bool operator==(const Trigger&) const = default;
};

struct Bdmp {
    std::vector<Leaf> leaves;      // sorted by id
    std::vector<Gate> gates;       // sorted by id
    std::vector<Trigger> triggers; // sorted by (origin, target)
    std::string top;
    std::map<std::string, std::vector<std::string>> repair_groups;

    const Leaf* find_leaf(const std::string& id) const;
    const Gate* find_gate(const std::string& id) const;
    bool has_node(const std::string& id) const;
    void canonicalize();  // sort containers into the canonical order

    bool operator==(const Bdmp&) const = default;
};

struct Diagnostic {
    std::string node;     // offending node id ("" for document-level issues)
    std::string rule;     // short rule tag, e.g. "gate-graph-cyclic"
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

// Parse a UTF-8 JSON model document. Applies defaults, canonicalizes, and
// rejects documents that fail validate(). Syntax errors report line/column.
Bdmp parse_model(const std::string& text);
Bdmp load_model(const std::string& path);

// Structural diagnostics; empty result means the model is well formed.
// Deterministic: diagnostics come out sorted by (node, rule).
std::vector<Diagnostic> validate(const Bdmp& model);

// Canonical document; parse_model(print_model(m)) == m for every valid m.
std::string print_model(const Bdmp& model);

// FNV-1a over the canonical document; identifies the model in reports.
uint64_t model_hash(const Bdmp& model);

const char* to_string(LeafKind kind);
const char* to_string(GateKind kind);

}  // namespace bdmp
