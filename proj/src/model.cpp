#include "bdmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace bdmp {

using nlohmann::ordered_json;

const char* to_string(LeafKind kind) {
    switch (kind) {
        case LeafKind::ExpFailure: return "exp";
        case LeafKind::OnDemand: return "demand";
        case LeafKind::PhaseErlang: return "erlang";
    }
    return "?";
}

const char* to_string(GateKind kind) {
    switch (kind) {
        case GateKind::And: return "and";
        case GateKind::Or: return "or";
        case GateKind::PriorityAnd: return "pand";
    }
    return "?";
}

const Leaf* Bdmp::find_leaf(const std::string& id) const {
    for (const auto& l : leaves)
        if (l.id == id) return &l;
    return nullptr;
}

const Gate* Bdmp::find_gate(const std::string& id) const {
    for (const auto& g : gates)
        if (g.id == id) return &g;
    return nullptr;
}

bool Bdmp::has_node(const std::string& id) const {
    return find_leaf(id) != nullptr || find_gate(id) != nullptr;
}

void Bdmp::canonicalize() {
    std::sort(leaves.begin(), leaves.end(),
              [](const Leaf& a, const Leaf& b) { return a.id < b.id; });
    std::sort(gates.begin(), gates.end(),
              [](const Gate& a, const Gate& b) { return a.id < b.id; });
    std::sort(triggers.begin(), triggers.end(), [](const Trigger& a, const Trigger& b) {
        return std::tie(a.origin, a.target) < std::tie(b.origin, b.target);
    });
    for (auto& [name, members] : repair_groups) std::sort(members.begin(), members.end());
}

namespace {

// Translate a byte offset from nlohmann's parse_error into line/column.
std::pair<int, int> line_column(const std::string& text, size_t byte) {
    int line = 1, col = 1;
    for (size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ModelError("unknown key \"" + it.key() + "\" in " + where);
    }
}

double get_number(const ordered_json& obj, const char* key, const std::string& where) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ModelError(where + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

}  // namespace

Bdmp parse_model(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        std::ostringstream msg;
        msg << "syntax error at line " << line << ", column " << col << ": " << e.what();
        throw ModelError(msg.str());
    }
    if (!doc.is_object()) throw ModelError("model document must be a JSON object");
    reject_unknown_keys(doc, {"leaves", "gates", "triggers", "top", "repair_groups"}, "document");
    if (!doc.contains("leaves") || !doc.contains("top"))
        throw ModelError("model document requires \"leaves\" and \"top\"");

    Bdmp m;
    std::set<std::string> ids;

    for (const auto& j : doc.at("leaves")) {
        if (!j.is_object()) throw ModelError("leaf entries must be objects");
        reject_unknown_keys(j,
                            {"id", "kind", "lambda_active", "lambda_standby", "gamma",
                             "erlang_phases", "erlang_rate", "mu", "initiator", "repair_group"},
                            "leaf");
        Leaf l;
        l.id = j.at("id").get<std::string>();
        if (l.id.empty()) throw ModelError("leaf id must be non-empty");
        if (!ids.insert(l.id).second) throw ModelError("duplicate id \"" + l.id + "\"");
        const std::string where = "leaf \"" + l.id + "\"";

        std::string kind = j.value("kind", "exp");
        if (kind == "exp") {
            l.kind = LeafKind::ExpFailure;
            l.lambda_active = get_number(j, "lambda_active", where);
            if (j.contains("lambda_standby")) l.lambda_standby = get_number(j, "lambda_standby", where);
            if (j.contains("gamma") || j.contains("erlang_phases") || j.contains("erlang_rate"))
                throw ModelError(where + ": parameters do not match kind \"exp\"");
        } else if (kind == "demand") {
            l.kind = LeafKind::OnDemand;
            l.gamma = get_number(j, "gamma", where);
            if (j.contains("lambda_active") || j.contains("lambda_standby") ||
                j.contains("erlang_phases") || j.contains("erlang_rate"))
                throw ModelError(where + ": parameters do not match kind \"demand\"");
        } else if (kind == "erlang") {
            l.kind = LeafKind::PhaseErlang;
            if (!j.contains("erlang_phases") || !j.contains("erlang_rate"))
                throw ModelError(where + ": kind \"erlang\" requires erlang_phases and erlang_rate");
            if (!j.at("erlang_phases").is_number_integer())
                throw ModelError(where + ": erlang_phases must be an integer");
            l.erlang_phases = j.at("erlang_phases").get<int>();
            l.erlang_rate = get_number(j, "erlang_rate", where);
            if (j.contains("lambda_active") || j.contains("lambda_standby") || j.contains("gamma"))
                throw ModelError(where + ": parameters do not match kind \"erlang\"");
        } else {
            throw ModelError(where + ": unknown kind \"" + kind + "\"");
        }
        if (j.contains("mu")) l.mu = get_number(j, "mu", where);
        l.initiator = j.value("initiator", false);
        if (j.contains("repair_group")) l.repair_group = j.at("repair_group").get<std::string>();
        m.leaves.push_back(std::move(l));
    }

    if (doc.contains("gates")) {
        for (const auto& j : doc.at("gates")) {
            if (!j.is_object()) throw ModelError("gate entries must be objects");
            reject_unknown_keys(j, {"id", "kind", "children"}, "gate");
            Gate g;
            g.id = j.at("id").get<std::string>();
            if (g.id.empty()) throw ModelError("gate id must be non-empty");
            if (!ids.insert(g.id).second) throw ModelError("duplicate id \"" + g.id + "\"");
            std::string kind = j.at("kind").get<std::string>();
            if (kind == "and")
                g.kind = GateKind::And;
            else if (kind == "or")
                g.kind = GateKind::Or;
            else if (kind == "pand")
                g.kind = GateKind::PriorityAnd;
            else
                throw ModelError("gate \"" + g.id + "\": unknown kind \"" + kind + "\"");
            g.children = j.at("children").get<std::vector<std::string>>();
            m.gates.push_back(std::move(g));
        }
    }

    if (doc.contains("triggers")) {
        for (const auto& j : doc.at("triggers")) {
            if (!j.is_object()) throw ModelError("trigger entries must be objects");
            reject_unknown_keys(j, {"origin", "target"}, "trigger");
            m.triggers.push_back({j.at("origin").get<std::string>(), j.at("target").get<std::string>()});
        }
    }

    m.top = doc.at("top").get<std::string>();

    if (doc.contains("repair_groups")) {
        for (auto it = doc.at("repair_groups").begin(); it != doc.at("repair_groups").end(); ++it) {
            m.repair_groups[it.key()] = it.value().get<std::vector<std::string>>();
        }
    }
    // Leaf-level "repair_group" and the top-level map must agree; merge them.
    for (auto& l : m.leaves) {
        if (!l.repair_group.empty()) {
            auto& members = m.repair_groups[l.repair_group];
            if (std::find(members.begin(), members.end(), l.id) == members.end())
                members.push_back(l.id);
        }
    }
    for (const auto& [name, members] : m.repair_groups) {
        for (const auto& id : members) {
            for (auto& l : m.leaves) {
                if (l.id != id) continue;
                if (!l.repair_group.empty() && l.repair_group != name)
                    throw ModelError("leaf \"" + id + "\" assigned to repair groups \"" +
                                     l.repair_group + "\" and \"" + name + "\"");
                l.repair_group = name;
            }
        }
    }

    m.canonicalize();

    auto diags = validate(m);
    if (!diags.empty()) {
        std::ostringstream msg;
        msg << "invalid model:";
        for (const auto& d : diags) msg << "\n  [" << d.rule << "] " << d.message;
        throw ModelError(msg.str());
    }
    return m;
}

Bdmp load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open model file \"" + path + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_model(buf.str());
}

namespace {

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

}  // namespace

std::vector<Diagnostic> validate(const Bdmp& m) {
    std::vector<Diagnostic> out;
    auto emit = [&out](const std::string& node, const char* rule, std::string msg) {
        out.push_back({node, rule, std::move(msg)});
    };

    std::set<std::string> ids;
    for (const auto& l : m.leaves) {
        if (l.id.empty()) emit(l.id, "empty-id", "leaf with empty id");
        if (!ids.insert(l.id).second) emit(l.id, "duplicate-id", "id \"" + l.id + "\" is not unique");
    }
    for (const auto& g : m.gates) {
        if (g.id.empty()) emit(g.id, "empty-id", "gate with empty id");
        if (!ids.insert(g.id).second) emit(g.id, "duplicate-id", "id \"" + g.id + "\" is not unique");
    }

    for (const auto& l : m.leaves) {
        if (!finite_nonneg(l.lambda_active) || !finite_nonneg(l.lambda_standby) ||
            !finite_nonneg(l.mu) || !finite_nonneg(l.erlang_rate))
            emit(l.id, "rate-invalid", "leaf \"" + l.id + "\" has a negative or non-finite rate");
        if (l.kind == LeafKind::OnDemand && !(l.gamma >= 0.0 && l.gamma <= 1.0))
            emit(l.id, "probability-out-of-range",
                 "leaf \"" + l.id + "\" gamma must lie in [0,1]");
        if (l.kind == LeafKind::PhaseErlang && l.erlang_phases < 1)
            emit(l.id, "erlang-phases-invalid", "leaf \"" + l.id + "\" needs erlang_phases >= 1");
    }

    for (const auto& g : m.gates) {
        if (g.children.empty())
            emit(g.id, "gate-no-children", "gate \"" + g.id + "\" has no children");
        if (g.kind == GateKind::PriorityAnd && g.children.size() < 2)
            emit(g.id, "pand-arity", "pand gate \"" + g.id + "\" needs at least 2 children");
        for (const auto& c : g.children) {
            if (!m.has_node(c))
                emit(g.id, "unknown-reference",
                     "gate \"" + g.id + "\" references unknown node \"" + c + "\"");
        }
    }

    std::set<std::pair<std::string, std::string>> seen_triggers;
    for (const auto& t : m.triggers) {
        if (t.origin == t.target)
            emit(t.origin, "trigger-self-loop", "trigger origin equals target \"" + t.origin + "\"");
        if (!m.has_node(t.origin))
            emit(t.origin, "unknown-reference", "trigger origin \"" + t.origin + "\" is undefined");
        if (!m.has_node(t.target))
            emit(t.target, "unknown-reference", "trigger target \"" + t.target + "\" is undefined");
        if (!seen_triggers.insert({t.origin, t.target}).second)
            emit(t.origin, "duplicate-trigger",
                 "duplicate trigger " + t.origin + " -> " + t.target);
    }

    if (!m.has_node(m.top)) {
        emit(m.top, "unknown-reference", "top node \"" + m.top + "\" is undefined");
    }

    for (const auto& [name, members] : m.repair_groups) {
        for (const auto& id : members) {
            const Leaf* l = m.find_leaf(id);
            if (!l)
                emit(id, "unknown-reference",
                     "repair group \"" + name + "\" references unknown leaf \"" + id + "\"");
            else if (!l->repairable())
                emit(id, "repair-group-member-not-repairable",
                     "leaf \"" + id + "\" in group \"" + name + "\" has mu = 0");
        }
    }

    // Gate edges must form a DAG; DFS with a color map over gate ids.
    {
        std::map<std::string, int> color;  // 0 white, 1 grey, 2 black
        bool cyclic = false;
        std::string witness;
        auto dfs = [&](auto&& self, const std::string& id) -> void {
            const Gate* g = nullptr;
            for (const auto& gate : m.gates)
                if (gate.id == id) g = &gate;
            if (!g || cyclic) return;
            int& c = color[id];
            if (c == 1) {
                cyclic = true;
                witness = id;
                return;
            }
            if (c == 2) return;
            c = 1;
            for (const auto& child : g->children)
                if (m.find_gate(child)) {
                    if (color[child] == 1) {
                        cyclic = true;
                        witness = child;
                        break;
                    }
                    self(self, child);
                }
            c = 2;
        };
        for (const auto& g : m.gates) {
            dfs(dfs, g.id);
            if (cyclic) break;
        }
        if (cyclic) emit(witness, "gate-graph-cyclic", "gate graph contains a cycle through \"" + witness + "\"");
    }

    // Reachability: every node reachable from top or touched by a trigger.
    if (m.has_node(m.top)) {
        std::set<std::string> reach;
        std::vector<std::string> stack{m.top};
        for (const auto& t : m.triggers) {
            if (m.has_node(t.origin)) stack.push_back(t.origin);
            if (m.has_node(t.target)) stack.push_back(t.target);
        }
        while (!stack.empty()) {
            std::string id = stack.back();
            stack.pop_back();
            if (!reach.insert(id).second) continue;
            if (const Gate* g = m.find_gate(id))
                for (const auto& c : g->children)
                    if (m.has_node(c)) stack.push_back(c);
        }
        for (const auto& l : m.leaves)
            if (!reach.count(l.id))
                emit(l.id, "unreachable-node", "leaf \"" + l.id + "\" is not connected to the model");
        for (const auto& g : m.gates)
            if (!reach.count(g.id))
                emit(g.id, "unreachable-node", "gate \"" + g.id + "\" is not connected to the model");
    }

    std::sort(out.begin(), out.end(), [](const Diagnostic& a, const Diagnostic& b) {
        return std::tie(a.node, a.rule, a.message) < std::tie(b.node, b.rule, b.message);
    });
    return out;
}

std::string print_model(const Bdmp& model) {
    Bdmp m = model;
    m.canonicalize();
    ordered_json doc;
    doc["leaves"] = ordered_json::array();
    for (const auto& l : m.leaves) {
        ordered_json j;
        j["id"] = l.id;
        j["kind"] = to_string(l.kind);
        switch (l.kind) {
            case LeafKind::ExpFailure:
                j["lambda_active"] = l.lambda_active;
                if (l.lambda_standby != 0.0) j["lambda_standby"] = l.lambda_standby;
                break;
            case LeafKind::OnDemand:
                j["gamma"] = l.gamma;
                break;
            case LeafKind::PhaseErlang:
                j["erlang_phases"] = l.erlang_phases;
                j["erlang_rate"] = l.erlang_rate;
                break;
        }
        if (l.mu != 0.0) j["mu"] = l.mu;
        if (l.initiator) j["initiator"] = true;
        doc["leaves"].push_back(std::move(j));
    }
    doc["gates"] = ordered_json::array();
    for (const auto& g : m.gates) {
        ordered_json j;
        j["id"] = g.id;
        j["kind"] = to_string(g.kind);
        j["children"] = g.children;
        doc["gates"].push_back(std::move(j));
    }
    doc["triggers"] = ordered_json::array();
    for (const auto& t : m.triggers)
        doc["triggers"].push_back({{"origin", t.origin}, {"target", t.target}});
    doc["top"] = m.top;
    doc["repair_groups"] = ordered_json::object();
    for (const auto& [name, members] : m.repair_groups) doc["repair_groups"][name] = members;
    return doc.dump(2) + "\n";
}

uint64_t model_hash(const Bdmp& model) {
    const std::string text = print_model(model);
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace bdmp
