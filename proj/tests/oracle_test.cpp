#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "test_util.hpp"

using namespace srpc;
using namespace srpc::testutil;

namespace {

MonitoredNetwork deadlocked_envelope(int probe_delay = 0) {
    auto scn = parse_scenario(kEnvelope);
    MonitoredSystem sys{instrument(build_network(scn), probe_delay)};
    drive_envelope_deadlock(sys, *scn.names);
    return sys.net;
}

// Exhaustive restatement of the deadlocked-set definition: the union of all
// nonempty subsets whose members are each locked on a member.
std::vector<Name> deadlocked_by_subsets(const Network& n) {
    REQUIRE(n.size() <= 16);
    WaitForGraph g = locked_map(n);
    std::vector<bool> in_any(n.size(), false);
    for (std::uint32_t mask = 1; mask < (1u << n.size()); ++mask) {
        bool good = true;
        for (std::uint32_t i = 0; i < n.size() && good; ++i) {
            if (!(mask & (1u << i))) continue;
            auto t = g.target(Name(i));
            good = t && (mask & (1u << t->index()));
        }
        if (good)
            for (std::uint32_t i = 0; i < n.size(); ++i)
                if (mask & (1u << i)) in_any[i] = true;
    }
    std::vector<Name> out;
    for (std::uint32_t i = 0; i < n.size(); ++i)
        if (in_any[i]) out.push_back(Name(i));
    return out;
}

} // namespace

TEST_CASE("deadlocked envelope forms one six-cycle") {
    MonitoredNetwork mn = deadlocked_envelope();
    Network d = deinstrument(mn);
    const NameTable& t = *d.names;
    WaitForGraph g = locked_map(d);
    auto edge = [&](const char* a, const char* b) {
        auto tg = g.target(t.lookup(a));
        REQUIRE(tg.has_value());
        CHECK(*tg == t.lookup(b));
    };
    edge("e1", "p2");
    edge("p2", "e2");
    edge("e2", "p3");
    edge("p3", "e3");
    edge("e3", "p1");
    edge("p1", "e1");
    CHECK_FALSE(g.target(d.names->lookup("_init")).has_value());

    auto dl = deadlocked_set(d);
    CHECK(dl.size() == 6);
}

TEST_CASE("initial networks have no locks and pass the initial check") {
    auto scn = parse_scenario(kEnvelope);
    Network net = build_network(scn);
    WaitForGraph g = locked_map(net);
    for (std::uint32_t i = 0; i < net.size(); ++i) CHECK_FALSE(g.target(Name(i)).has_value());
    CHECK(check_initial(net).ok);
    CHECK(deadlocked_set(net).empty());
}

TEST_CASE("initial check flags locked processes and named working clients") {
    auto scn = parse_scenario(kProxyLoop);
    Network net = build_network(scn);
    Name server = scn.names->lookup("server");

    Network locked = net;
    locked.at(server).process.mode = ScriptProcess::Mode::Await;
    locked.at(server).process.await_from = Name(1);
    locked.at(server).process.prog = make_payload({}, "x");
    CHECK_FALSE(check_initial(locked).ok);

    Network named = net;
    named.at(server).process.mode = ScriptProcess::Mode::Run;
    named.at(server).process.client = ClientRef(Name(1));
    named.at(server).process.prog = make_payload({}, "x");
    CHECK_FALSE(check_initial(named).ok);
}

TEST_CASE("a lock chain without a cycle is not deadlocked") {
    std::mt19937_64 rng(6);
    // a -> b -> c with c busy: nobody is deadlocked
    auto scn = parse_scenario(R"(
services: a b c
session s1: query a [call b [call c [delay 50]]]
)");
    UnmonitoredSystem sys{build_network(scn)};
    auto res = run(sys, Policy::seeded_random(7), 40);
    (void)res;
    auto dl = deadlocked_set(sys.net);
    CHECK(dl.empty());
    (void)rng;
}

TEST_CASE("deadlocked set agrees with exhaustive subset enumeration") {
    std::mt19937_64 rng(2025);
    int deadlocks = 0;
    for (int round = 0; round < 400; ++round) {
        Scenario scn = random_scenario(rng, 2 + static_cast<int>(rng() % 5));
        UnmonitoredSystem sys{build_network(scn)};
        run(sys, Policy::seeded_random(rng()), 300);
        auto fast = deadlocked_set(sys.net);
        auto slow = deadlocked_by_subsets(sys.net);
        REQUIRE(fast.size() == slow.size());
        for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == slow[i]);
        if (!fast.empty()) ++deadlocks;
    }
    CHECK(deadlocks > 0); // the sweep must exercise real deadlocks
}

TEST_CASE("clients are recognized through queue, process, and output stages") {
    auto scn = parse_scenario(kProxyLoop);
    Network net = build_network(scn);
    Name server = scn.names->lookup("server");
    Name proxy = scn.names->lookup("pxy");

    Service& s = net.at(server);
    CHECK_FALSE(is_client_of(proxy, s));
    s.input.push({ClientRef(proxy), Tag::Query, nullptr});
    CHECK(is_client_of(proxy, s));
    s.input.take(ClientRef(proxy), Tag::Query);

    s.process.mode = ScriptProcess::Mode::Run;
    s.process.client = ClientRef(proxy);
    s.process.prog = make_payload({}, "x");
    CHECK(is_client_of(proxy, s));
    s.process = idle_process(Role::endpoint());

    s.output.push({ClientRef(proxy), Tag::Response, nullptr});
    CHECK(is_client_of(proxy, s));
}

TEST_CASE("well-formedness holds along the envelope run, including when deadlocked") {
    MonitoredNetwork mn = deadlocked_envelope();
    CHECK(check_wf(mn).ok);
    CHECK(check_wf(deinstrument(mn)).ok);
}

TEST_CASE("well-formedness flags duplicated responses") {
    auto scn = parse_scenario(kProxyLoop);
    Network net = build_network(scn);
    Name server = scn.names->lookup("server");
    net.at(server).input.push({ClientRef(Name(1)), Tag::Response, nullptr});
    net.at(server).input.push({ClientRef(Name(1)), Tag::Response, nullptr});
    auto r = check_wf(net);
    CHECK_FALSE(r.ok);
    bool found = false;
    for (const auto& v : r.violations) found |= v.rule == "client-1";
    CHECK(found);
}

TEST_CASE("well-formedness checks the client/locked biconditional") {
    auto scn = parse_scenario(kProxyLoop);
    Network net = build_network(scn);
    Name server = scn.names->lookup("server");
    Name proxy = scn.names->lookup("pxy");
    // a query from server sits at proxy, but server is not locked on proxy
    net.at(proxy).input.push({ClientRef(server), Tag::Query, nullptr});
    auto r = check_wf(net);
    CHECK_FALSE(r.ok);
    bool found = false;
    for (const auto& v : r.violations) found |= v.rule == "net-2";
    CHECK(found);
}

TEST_CASE("well-formedness holds at every step of seeded runs") {
    std::mt19937_64 rng(31337);
    for (int round = 0; round < 60; ++round) {
        Scenario scn = random_scenario(rng, 2 + static_cast<int>(rng() % 5));
        UnmonitoredSystem sys{build_network(scn)};
        auto hook = [&](long) { return check_wf(sys.net).ok ? std::string{} : "wf violated"; };
        auto res = run(sys, Policy::seeded_random(rng()), 400, hook);
        CHECK(res.reason != StopReason::Violation);
    }
}

TEST_CASE("complete knowledge holds along the monitored envelope and spots mutations") {
    MonitoredNetwork mn = deadlocked_envelope();
    CHECK(check_complete_knowledge(mn).ok);

    MonitoredNetwork broken = mn;
    broken.at(broken.names->lookup("e1")).mstate.probe.reset();
    CHECK_FALSE(check_complete_knowledge(broken).ok);
}

TEST_CASE("complete knowledge is vacuous on the initial instrumentation") {
    auto scn = parse_scenario(kEnvelope);
    MonitoredNetwork mn = instrument(build_network(scn));
    CHECK(check_complete_knowledge(mn).ok);
    CHECK(check_sound_knowledge(mn).ok);
}

TEST_CASE("sound knowledge flags a waiting entry without a lock") {
    auto scn = parse_scenario(kProxyLoop);
    MonitoredNetwork mn = instrument(build_network(scn));
    waiting_add(mn.at(scn.names->lookup("server")).mstate, scn.names->lookup("pxy"));
    auto r = check_sound_knowledge(mn);
    CHECK_FALSE(r.ok);
    bool found = false;
    for (const auto& v : r.violations) found |= v.rule == "sound-2";
    CHECK(found);
}

TEST_CASE("alarm condition holds in the deadlocked envelope before any alarm") {
    MonitoredNetwork mn = deadlocked_envelope();
    REQUIRE_FALSE(any_alarm(mn));
    Network d = deinstrument(mn);
    const NameTable& t = *d.names;
    // the endpoints' probes are already in backward flight toward them
    for (const char* e : {"e1", "e2", "e3"}) CHECK(alarm_condition(mn, t.lookup(e)));
    // every deadlocked service is transitively locked on one with the condition
    WaitForGraph g = locked_map(d);
    for (Name n : deadlocked_set(d)) {
        bool reaches = false;
        Name cur = n;
        for (std::size_t hop = 0; hop <= d.size() && !reaches; ++hop) {
            auto nx = g.target(cur);
            if (!nx) break;
            cur = *nx;
            reaches = alarm_condition(mn, cur);
        }
        CHECK(reaches);
    }
    CHECK_FALSE(alarm_condition(mn, t.lookup("_init")));
}

TEST_CASE("alarm condition via a raised alarm flag") {
    MonitoredNetwork mn = deadlocked_envelope();
    Name e1 = mn.names->lookup("e1");
    mn.at(e1).mstate.alarm = true;
    CHECK(alarm_condition(mn, e1));
}

TEST_CASE("alarm condition is false everywhere on non-deadlocked runs") {
    std::mt19937_64 rng(777);
    int checked = 0;
    for (int round = 0; round < 40; ++round) {
        Scenario scn = random_scenario(rng, 2 + static_cast<int>(rng() % 4));
        MonitoredSystem sys{instrument(build_network(scn))};
        run(sys, Policy::seeded_random(rng()), 300);
        if (!deadlocked_set(deinstrument(sys.net)).empty()) continue;
        ++checked;
        for (std::uint32_t i = 0; i < sys.net.size(); ++i)
            CHECK_FALSE(alarm_condition(sys.net, Name(i)));
    }
    CHECK(checked > 0);
}

TEST_CASE("knowledge invariants hold at every step of seeded monitored runs") {
    std::mt19937_64 rng(90210);
    for (int round = 0; round < 40; ++round) {
        Scenario scn = random_scenario(rng, 2 + static_cast<int>(rng() % 5));
        MonitoredSystem sys{instrument(build_network(scn))};
        auto hook = [&](long) -> std::string {
            if (!check_complete_knowledge(sys.net).ok) return "complete knowledge violated";
            if (!check_sound_knowledge(sys.net).ok) return "sound knowledge violated";
            return {};
        };
        auto res = run(sys, Policy::seeded_random(rng()), 400, hook, false);
        CHECK(res.reason != StopReason::Violation);
    }
}
