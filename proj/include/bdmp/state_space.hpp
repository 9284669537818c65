#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bdmp/model.hpp"

namespace bdmp {

// Index-based view of a Bdmp. Node indices: leaves first (model order),
// then gates. All engines work on indices; ids appear only in labels.
class ModelIndex {
  public:
    explicit ModelIndex(const Bdmp& model);

    const Bdmp& model() const { return *model_; }
    int node_count() const { return static_cast<int>(node_ids_.size()); }
    int leaf_count() const { return nleaves_; }
    int gate_count() const { return static_cast<int>(node_ids_.size()) - nleaves_; }
    int pand_count() const { return static_cast<int>(pand_gates_.size()); }
    int group_count() const { return static_cast<int>(group_members_.size()); }

    const std::string& node_id(int n) const { return node_ids_[n]; }
    int index_of(const std::string& id) const;
    bool is_leaf(int n) const { return n < nleaves_; }
    const Leaf& leaf(int n) const { return model_->leaves[n]; }
    const Gate& gate(int n) const { return model_->gates[n - nleaves_]; }
    int top() const { return top_; }

    // Position of a pand gate in the prefix array, -1 for other nodes.
    int pand_slot(int gate_node) const { return pand_slot_[gate_node]; }
    int pand_gate(int slot) const { return pand_gates_[slot]; }

    int leaf_group(int leaf) const { return leaf_group_[leaf]; }
    const std::vector<int>& group_members(int g) const { return group_members_[g]; }
    const std::string& group_name(int g) const { return group_names_[g]; }

    const std::vector<int>& gate_children(int gate_node) const {
        return children_[gate_node - nleaves_];
    }
    const std::vector<int>& triggers_into(int node) const { return trig_into_[node]; }
    bool is_trigger_target(int node) const { return !trig_into_[node].empty(); }

    // Gates in bottom-up (child-before-parent) order.
    const std::vector<int>& gate_eval_order() const { return gate_order_; }

    // Structure values and activation flags for a given leaf configuration.
    // leaf_failed[i] is the boolean status of leaf i; pand_prefix holds one
    // entry per pand gate (use nullptr when the model has no pand gates and
    // values should treat pands as plain ands -- not used by engines).
    void eval(const uint8_t* leaf_failed, const uint8_t* pand_prefix,
              std::vector<uint8_t>& value, std::vector<uint8_t>& active) const;

  private:
    const Bdmp* model_;
    int nleaves_ = 0;
    int top_ = -1;
    std::vector<std::string> node_ids_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::vector<int>> children_;   // per gate
    std::vector<std::vector<int>> trig_into_;  // per node: origin node indices
    std::vector<int> gate_order_;
    std::vector<int> pand_gates_;
    std::vector<int> pand_slot_;
    std::vector<std::string> group_names_;
    std::vector<std::vector<int>> group_members_;
    std::vector<int> leaf_group_;
};

// Tangible marking of the model. leaf_state packs the failed flag (bit 7)
// with the current erlang phase (low bits); pand_prefix is the per-pand
// count of children failed in left-to-right order; repair_queue holds the
// FCFS order of failed members per repair group.
struct SystemState {
    std::vector<uint8_t> leaf_state;
    std::vector<uint8_t> pand_prefix;
    std::vector<std::vector<uint16_t>> repair_queue;

    static constexpr uint8_t kFailedBit = 0x80;
    bool failed(int leaf) const { return leaf_state[leaf] & kFailedBit; }
    int phase(int leaf) const { return leaf_state[leaf] & 0x7f; }

    bool operator==(const SystemState&) const = default;
};

struct SystemStateHash {
    size_t operator()(const SystemState& s) const;
};

SystemState initial_state(const ModelIndex& ix);

enum class EventKind { Repair = 0, PhaseAdvance = 1, Failure = 2 };

struct DemandOutcome {
    int leaf;
    bool failed;
    double factor;  // gamma or 1-gamma, in (0,1]

    bool operator==(const DemandOutcome&) const = default;
};

struct TransitionLabel {
    int leaf = -1;
    EventKind event = EventKind::Failure;
    std::vector<DemandOutcome> demands;

    std::string str(const ModelIndex& ix) const;
    bool operator==(const TransitionLabel&) const = default;
};

struct EnumeratedTransition {
    double rate;
    SystemState to;
    TransitionLabel label;
};

// Explicit sparse CTMC. State 0 is the initial state; goal states carry no
// outgoing transitions. `states` is populated by build_ctmc and empty for
// imported or synthetic chains.
struct CtmcTransition {
    int src;
    int dst;
    double rate;
    std::string label;

    bool operator==(const CtmcTransition&) const = default;
};

struct CtmcSparse {
    std::vector<std::string> state_names;
    std::vector<CtmcTransition> transitions;  // grouped by src, ascending
    std::vector<int> goal;                    // sorted, unique
    std::vector<SystemState> states;

    int n_states() const { return static_cast<int>(state_names.size()); }
    bool is_goal(int s) const;
    std::vector<double> exit_rates() const;

    // [row_start[s], row_start[s+1]) indexes this state's transitions.
    void build_rows();
    const std::vector<int>& row_start() const { return row_start_; }

    bool operator==(const CtmcSparse& o) const {
        return state_names == o.state_names && transitions == o.transitions && goal == o.goal;
    }

  private:
    std::vector<int> row_start_;
};

// BDMP activation semantics: top is always active, trigger targets are
// active iff some trigger into them has a failed origin, and every other
// node is active iff one of its parents is.
std::map<std::string, bool> activation(const Bdmp& model, const SystemState& state);

// Boolean value of each node: failed leaves are true, and/or are standard,
// a pand is true when its ordered prefix covers all children.
std::map<std::string, bool> structure_value(const Bdmp& model, const SystemState& state);

// All timed transitions leaving `state`, in canonical label order. On-demand
// leaves activated by a jump are resolved instantaneously, splitting the
// transition per outcome with its probability folded into the rate.
std::vector<EnumeratedTransition> enumerate_transitions(const ModelIndex& ix,
                                                        const SystemState& state,
                                                        bool filtering);

// Apply one atomic leaf event to `state`: status flip, repair queue upkeep,
// and pand prefix advance/break as child values flip. `value_pre` must hold
// the node values before the event and is replaced with the new values.
// Both the state-space builder and the simulator go through this.
void apply_leaf_event(const ModelIndex& ix, SystemState& state, int leaf, EventKind kind,
                      std::vector<uint8_t>& value_pre, std::vector<uint8_t>& value_post);

struct BuildOptions {
    bool filtering = false;
    int max_states = 1 << 20;
    bool merge_goals = true;
};

// Breadth-first closure from the initial state. Deterministic: discovery
// order is BFS with transitions emitted in canonical label order.
CtmcSparse build_ctmc(const Bdmp& model, const BuildOptions& opts = {});
CtmcSparse build_ctmc(const ModelIndex& ix, const BuildOptions& opts = {});

void export_ctmc(const CtmcSparse& ctmc, std::ostream& out);
std::string export_ctmc(const CtmcSparse& ctmc);
CtmcSparse import_ctmc(std::istream& in);
CtmcSparse import_ctmc(const std::string& text);

}  // namespace bdmp
