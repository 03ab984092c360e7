#include "qkdhorse/wire.hpp"

#include <cstdio>

#include <json.hpp>

namespace qkdhorse {

namespace {

using nlohmann::json;

void require_fields(const json& j, std::initializer_list<const char*> fields) {
    for (const char* f : fields)
        if (!j.contains(f)) throw WireFormatError(std::string("missing field \"") + f + "\"");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* f : fields)
            if (it.key() == f) known = true;
        if (!known) throw WireFormatError("unknown field \"" + it.key() + "\"");
    }
}

} // namespace

std::string encode(const WireMessage& msg) {
    char buf[192];
    if (const SyncMsg* m = std::get_if<SyncMsg>(&msg)) {
        std::snprintf(buf, sizeof(buf),
                      "{\"t\":\"sync\",\"session\":%llu,\"n_slots\":%lld,\"kind\":\"%s\"}",
                      static_cast<unsigned long long>(m->session),
                      static_cast<long long>(m->n_slots), m->activate ? "activate" : "normal");
    } else if (const PulseMsg* m = std::get_if<PulseMsg>(&msg)) {
        std::snprintf(buf, sizeof(buf), "{\"t\":\"pulse\",\"q\":%llu,\"slot\":%lld,\"pol\":%d}",
                      static_cast<unsigned long long>(m->q), static_cast<long long>(m->slot),
                      m->pol);
    } else if (const AnnounceMsg* m = std::get_if<AnnounceMsg>(&msg)) {
        std::snprintf(buf, sizeof(buf), "{\"t\":\"ann\",\"q\":%llu,\"det\":%s,\"set\":%d}",
                      static_cast<unsigned long long>(m->q), m->det ? "true" : "false", m->set);
    } else {
        const DoneMsg& d = std::get<DoneMsg>(msg);
        std::snprintf(buf, sizeof(buf), "{\"t\":\"done\",\"count\":%llu}",
                      static_cast<unsigned long long>(d.count));
    }
    return buf;
}

WireMessage decode_line(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw WireFormatError(std::string("unparsable JSON: ") + e.what());
    }
    if (!j.is_object()) throw WireFormatError("message is not a JSON object");

    std::string t;
    try {
        t = j.at("t").get<std::string>();
    } catch (const json::exception&) {
        throw WireFormatError("missing message type \"t\"");
    }

    try {
        if (t == "sync") {
            require_fields(j, {"t", "session", "n_slots", "kind"});
            SyncMsg m;
            m.session = j.at("session").get<std::uint64_t>();
            m.n_slots = j.at("n_slots").get<std::int64_t>();
            const std::string kind = j.at("kind").get<std::string>();
            if (kind != "normal" && kind != "activate")
                throw WireFormatError("bad sync kind \"" + kind + "\"");
            m.activate = kind == "activate";
            return m;
        }
        if (t == "pulse") {
            require_fields(j, {"t", "q", "slot", "pol"});
            PulseMsg m;
            m.q = j.at("q").get<std::uint64_t>();
            m.slot = j.at("slot").get<std::int64_t>();
            m.pol = j.at("pol").get<int>();
            if (m.pol != 0 && m.pol != 1) throw WireFormatError("pol must be 0 or 1");
            if (m.slot < 0) throw WireFormatError("negative slot");
            return m;
        }
        if (t == "ann") {
            require_fields(j, {"t", "q", "det", "set"});
            AnnounceMsg m;
            m.q = j.at("q").get<std::uint64_t>();
            m.det = j.at("det").get<bool>();
            m.set = j.at("set").get<int>();
            if (m.set < 0 || m.set > 3) throw WireFormatError("set out of range");
            return m;
        }
        if (t == "done") {
            require_fields(j, {"t", "count"});
            DoneMsg m;
            m.count = j.at("count").get<std::uint64_t>();
            return m;
        }
    } catch (const json::exception& e) {
        throw WireFormatError(std::string("bad field type: ") + e.what());
    }
    throw WireFormatError("unknown message type \"" + t + "\"");
}

} // namespace qkdhorse
