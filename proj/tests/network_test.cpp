#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "srpc/scenario.hpp"

using namespace srpc;

namespace {

NameTablePtr small_table(int n) {
    auto t = std::make_shared<NameTable>();
    for (int i = 0; i < n; ++i) t->intern("n" + std::to_string(i));
    return t;
}

Service endpoint_locked(ClientRef client, Name server) {
    ScriptProcess p = idle_process(Role::endpoint());
    p.mode = ScriptProcess::Mode::Await;
    p.client = client;
    p.await_from = server;
    p.prog = make_payload({}, "t");
    Service s = make_service(p);
    return s;
}

} // namespace

TEST_CASE("a locked service with the awaited response enables exactly one receive") {
    Service s = endpoint_locked(ClientRef::anon(), Name(2));
    s.input.push({ClientRef(Name(2)), Tag::Response, nullptr});
    auto en = service_internal_enabled(s);
    REQUIRE(en.size() == 1);
    CHECK(en[0].kind == ServiceInternal::Kind::TauIn);
    CHECK(en[0].peer == ClientRef(Name(2)));
    CHECK(en[0].tag == Tag::Response);
}

TEST_CASE("a ready service with empty queues has no internal transitions") {
    Service s = make_service(idle_process(Role::endpoint()));
    CHECK(service_internal_enabled(s).empty());
    CHECK(service_sendable(s).empty());
}

TEST_CASE("a nonempty output queue enables a send for its oldest message") {
    Service s = make_service(idle_process(Role::endpoint()));
    s.output.push({ClientRef(Name(1)), Tag::Query, nullptr});
    auto sends = service_sendable(s);
    REQUIRE(sends.size() == 1);
    CHECK(sends[0].first == Name(1));
    CHECK(sends[0].second == Tag::Query);
}

TEST_CASE("is_locked_on requires all three lock clauses") {
    // deadlocked-envelope shape: locked process, no response queued, empty output
    Service e1 = endpoint_locked(ClientRef::anon(), Name(4));
    e1.input.push({ClientRef(Name(3)), Tag::Query, nullptr});
    CHECK(is_locked_on(e1, Name(4)));
    CHECK_FALSE(is_locked_on(e1, Name(3)));

    // clause 3: pending output means not locked yet
    Service mid = endpoint_locked(ClientRef::anon(), Name(4));
    mid.output.push({ClientRef(Name(4)), Tag::Query, nullptr});
    CHECK_FALSE(is_locked_on(mid, Name(4)));

    // clause 2: the awaited response is already queued
    Service resp = endpoint_locked(ClientRef::anon(), Name(4));
    resp.input.push({ClientRef(Name(4)), Tag::Response, nullptr});
    CHECK_FALSE(is_locked_on(resp, Name(4)));

    // clause 1: a working process is not locked
    Service w = make_service(idle_process(Role::endpoint()));
    CHECK_FALSE(is_locked_on(w, Name(4)));
}

TEST_CASE("communication moves the oldest matching message into the recipient input") {
    Network net;
    net.names = small_table(2);
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    net.at(Name(0)).output.push({ClientRef(Name(1)), Tag::Query, make_payload({}, "a")});
    net.at(Name(0)).output.push({ClientRef(Name(1)), Tag::Query, make_payload({}, "b")});

    auto en = network_enabled(net);
    REQUIRE(en.size() == 1);
    REQUIRE(en[0].is_comm());
    network_step(net, en[0]);
    CHECK(net.at(Name(0)).output.size() == 1);
    REQUIRE(net.at(Name(1)).input.size() == 1);
    CHECK(net.at(Name(1)).input.at(0).payload->session == "a");
    CHECK(net.at(Name(1)).input.at(0).peer == ClientRef(Name(0)));
}

TEST_CASE("casts are delivered as anonymous queries") {
    Network net;
    net.names = small_table(2);
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    net.at(Name(0)).output.push({ClientRef(Name(1)), Tag::Cast, make_payload({}, "c")});

    network_step(net, NetworkAction::comm(Name(0), Name(1), Tag::Cast));
    REQUIRE(net.at(Name(1)).input.size() == 1);
    CHECK(net.at(Name(1)).input.at(0).peer == ClientRef::anon());
    CHECK(net.at(Name(1)).input.at(0).tag == Tag::Query);
}

TEST_CASE("non-enabled actions are rejected") {
    Network net;
    net.names = small_table(2);
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    net.services.push_back(make_service(idle_process(Role::endpoint())));
    CHECK_THROWS_AS(network_step(net, NetworkAction::comm(Name(0), Name(1), Tag::Query)),
                    SimError);
    ServiceInternal tau{ServiceInternal::Kind::Tau, ClientRef::anon(), Tag::Query};
    CHECK_THROWS_AS(network_step(net, NetworkAction::internal_act(Name(0), tau)), SimError);
}

TEST_CASE("quiescent network enables nothing") {
    auto scn = parse_scenario("services: a b\nsession s: query a []");
    Network net = build_network(scn);
    // drive to quiescence deterministically
    long guard = 0;
    while (guard++ < 1000) {
        auto en = network_enabled(net);
        if (en.empty()) break;
        network_step(net, en.front());
    }
    CHECK(network_enabled(net).empty());
    // every process back to Ready
    for (const auto& s : net.services) CHECK(s.srpc().is_ready());
}

TEST_CASE("enabled set equals brute-force rule schema application on random states") {
    std::mt19937_64 rng(1234);
    auto scn = parse_scenario(R"(
services: a b c
proxy c -> a
session s1: query a [call b [delay 1], cast c []]
session s2: query b [delay 2, call c []]
)");
    for (int round = 0; round < 300; ++round) {
        Network net = build_network(scn);
        // random walk to a reachable state
        int steps = static_cast<int>(rng() % 40);
        for (int i = 0; i < steps; ++i) {
            auto en = network_enabled(net);
            if (en.empty()) break;
            network_step(net, en[rng() % en.size()]);
        }

        // rule-schema oracle: try every (service, peer, tag) combination
        std::vector<NetworkAction> want;
        auto universe = [&net]() {
            std::vector<ClientRef> u{ClientRef::anon()};
            for (std::uint32_t i = 0; i < net.size(); ++i) u.push_back(ClientRef(Name(i)));
            return u;
        }();
        for (std::uint32_t i = 0; i < net.size(); ++i) {
            const Service& s = net.services[i];
            ProcessOffer o = offer(s.process);
            for (auto peer : universe) {
                for (Tag t : {Tag::Query, Tag::Response, Tag::Cast}) {
                    bool receivable =
                        (o.kind == ProcessOffer::Kind::RecvAnyQuery && t == Tag::Query) ||
                        (o.kind == ProcessOffer::Kind::RecvResponse && t == Tag::Response &&
                         peer == ClientRef(o.peer));
                    if (receivable && s.input.has(peer, t))
                        want.push_back(NetworkAction::internal_act(
                            Name(i), {ServiceInternal::Kind::TauIn, peer, t}));
                }
            }
            if (o.kind == ProcessOffer::Kind::Send)
                want.push_back(NetworkAction::internal_act(
                    Name(i), {ServiceInternal::Kind::TauOut, ClientRef(o.peer), o.tag}));
            if (o.kind == ProcessOffer::Kind::Tau)
                want.push_back(
                    NetworkAction::internal_act(Name(i), {ServiceInternal::Kind::Tau}));
            for (auto peer : universe) {
                if (!peer.is_name()) continue;
                for (Tag t : {Tag::Response, Tag::Cast})
                    if (s.output.has(peer, t))
                        want.push_back(NetworkAction::comm(Name(i), peer.name(), t));
            }
            // queries travel strictly in order: only from the queue front
            if (!s.output.empty() && s.output.at(0).tag == Tag::Query)
                want.push_back(
                    NetworkAction::comm(Name(i), s.output.at(0).peer.name(), Tag::Query));
        }

        auto got = network_enabled(net);
        REQUIRE(got.size() == want.size());
        for (const auto& w : want)
            CHECK(std::find(got.begin(), got.end(), w) != got.end());
    }
}

TEST_CASE("replaying a recorded run reproduces the final state") {
    auto scn = parse_scenario(R"(
services: a b c p
proxy p -> c
session s1: query a [delay 1, call p [delay 1]]
session s2: query b [call c []]
)");
    std::mt19937_64 rng(5150);
    for (int round = 0; round < 50; ++round) {
        Network net = build_network(scn);
        std::vector<NetworkAction> recorded;
        long guard = 0;
        while (guard++ < 2000) {
            auto en = network_enabled(net);
            if (en.empty()) break;
            auto a = en[rng() % en.size()];
            recorded.push_back(a);
            network_step(net, a);
        }
        Network replay = build_network(scn);
        for (const auto& a : recorded) network_step(replay, a);
        CHECK(canonical_string(replay) == canonical_string(net));
    }
}

TEST_CASE("network domain stays fixed and total across steps") {
    auto scn = parse_scenario("services: a b\nproxy b -> a\nsession s: query a [call b []]");
    Network net = build_network(scn);
    std::mt19937_64 rng(8);
    std::size_t n = net.size();
    long guard = 0;
    while (guard++ < 500) {
        auto en = network_enabled(net);
        if (en.empty()) break;
        network_step(net, en[rng() % en.size()]);
        REQUIRE(net.size() == n);
    }
}
