#include "wpcn/serialize.hpp"

#include <fstream>

namespace wpcn {

using nlohmann::json;

namespace {

json eh_to_json(const EhParams& eh) {
    return json{{"a_sat", eh.a_sat}, {"b_sat", eh.b_sat}, {"m_sat", eh.m_sat}};
}

EhParams eh_from_json(const json& j) {
    EhParams eh;
    eh.a_sat = j.at("a_sat").get<double>();
    eh.b_sat = j.at("b_sat").get<double>();
    eh.m_sat = j.at("m_sat").get<double>();
    return eh;
}

}  // namespace

json instance_to_json(const NetworkInstance& inst) {
    json j{{"n", inst.n_sources},
           {"k", inst.k_relays},
           {"dl_gain", inst.dl_gain},
           {"ul_src", inst.ul_src},
           {"ul_relay", inst.ul_relay},
           {"demand", inst.demand},
           {"sys", {{"p_ap", inst.sys.p_ap},
                    {"p_max", inst.sys.p_max},
                    {"bandwidth_w", inst.sys.bandwidth_w},
                    {"noise_n0", inst.sys.noise_n0}}}};
    // Shared device parameters serialize as one object; heterogeneous
    // devices get an explicit per-device list.
    bool uniform = true;
    for (const auto& eh : inst.eh)
        uniform = uniform && eh.a_sat == inst.eh[0].a_sat &&
                  eh.b_sat == inst.eh[0].b_sat && eh.m_sat == inst.eh[0].m_sat;
    j["eh"] = eh_to_json(inst.eh.empty() ? EhParams{} : inst.eh[0]);
    if (!uniform) {
        json per = json::array();
        for (const auto& eh : inst.eh) per.push_back(eh_to_json(eh));
        j["eh_per_device"] = per;
    }
    return j;
}

NetworkInstance instance_from_json(const json& j) {
    NetworkInstance inst;
    inst.n_sources = j.at("n").get<int>();
    inst.k_relays = j.at("k").get<int>();
    inst.dl_gain = j.at("dl_gain").get<std::vector<double>>();
    inst.ul_src = j.at("ul_src").get<std::vector<std::vector<double>>>();
    inst.ul_relay = j.at("ul_relay").get<std::vector<double>>();
    inst.demand = j.at("demand").get<std::vector<double>>();
    const json& sys = j.at("sys");
    inst.sys.p_ap = sys.at("p_ap").get<double>();
    inst.sys.p_max = sys.at("p_max").get<double>();
    inst.sys.bandwidth_w = sys.at("bandwidth_w").get<double>();
    inst.sys.noise_n0 = sys.at("noise_n0").get<double>();
    if (j.contains("eh_per_device")) {
        for (const auto& e : j.at("eh_per_device")) inst.eh.push_back(eh_from_json(e));
    } else {
        inst.eh.assign(inst.n_sources + inst.k_relays, eh_from_json(j.at("eh")));
    }
    require(static_cast<int>(inst.dl_gain.size()) == inst.n_sources + inst.k_relays,
            "instance_from_json: dl_gain size mismatch");
    require(static_cast<int>(inst.ul_src.size()) == inst.n_sources,
            "instance_from_json: ul_src size mismatch");
    require(static_cast<int>(inst.eh.size()) == inst.n_sources + inst.k_relays,
            "instance_from_json: eh size mismatch");
    return inst;
}

NetworkInstance load_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    in >> j;
    return instance_from_json(j);
}

void save_instance(const NetworkInstance& inst, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << instance_to_json(inst).dump(2) << "\n";
}

json schedule_to_json(const Schedule& s) {
    return json{{"tau0", s.tau0},
                {"it_time", s.it_time},
                {"power", s.power},
                {"total", s.total}};
}

json selection_to_json(const SelectionResult& r) {
    return json{{"assignment", r.assignment.choice},
                {"schedule", schedule_to_json(r.schedule)},
                {"nodes_explored", r.nodes_explored},
                {"elapsed", r.elapsed}};
}

json residuals_to_json(const ResidualReport& r) {
    return json{{"energy", r.energy},
                {"demand", r.demand},
                {"power_cap", r.power_cap},
                {"nonneg", r.nonneg},
                {"feasible", r.feasible}};
}

}  // namespace wpcn
