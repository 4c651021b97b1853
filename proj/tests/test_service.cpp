#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"
#include "spdlog/spdlog.h"

#include "relay/core/manifest.hpp"
#include "relay/service/api_error.hpp"
#include "relay/service/registry.hpp"
#include "relay/service/server.hpp"
#include "relay/service/stats.hpp"
#include "relay/service/store.hpp"
#include "relay/wire.hpp"
#include "support/reference_digest.hpp"
#include "support/testutil.hpp"

using namespace relay;
using namespace relay::service;
using core::Category;
using core::FileManifest;
using testsupport::random_bytes;
using testsupport::TempDir;

namespace {

struct Upload {
    FileManifest manifest;
    std::vector<std::string> chunks;  // payload per index
};

// A manifest plus its chunk payloads, built from an actual staged file.
Upload make_upload(TempDir& dir, const std::string& owner, const std::string& rel,
                   std::size_t size, std::uint64_t chunk_size, std::uint64_t seed = 1,
                   Category category = Category::experimental) {
    auto data = random_bytes(size, seed);
    auto staged = dir.path() / ("staged_" + std::to_string(seed) + ".bin");
    testsupport::write_file(staged, data);
    Upload up;
    up.manifest = core::build_manifest(staged, owner, category, chunk_size);
    up.manifest.relative_path = rel;
    for (const auto& c : up.manifest.chunks) {
        up.chunks.emplace_back(reinterpret_cast<const char*>(data.data()) + c.offset, c.length);
    }
    return up;
}

void put_all(ObjectStore& store, const std::string& upload_id, const Upload& up) {
    for (std::size_t i = 0; i < up.chunks.size(); ++i) {
        store.put_chunk(upload_id, i, up.chunks[i]);
    }
}

std::string api_code(const ApiError& e) { return e.code; }

std::vector<DeviceRecord> test_devices() {
    return {{"dev-1", "opensesame", {"alice", "bob"}}, {"dev-2", "swordfish", {"carol"}}};
}

}  // namespace

TEST_CASE("registry issues tokens and authorizes them") {
    DeviceRegistry reg(test_devices());
    auto issued = reg.issue_token("dev-1", "opensesame");
    REQUIRE(issued.outcome == AuthOutcome::Ok);
    CHECK(issued.token.size() == 48);
    CHECK(issued.expires_at_ms > core::now_ms());

    auto info = reg.authorize(issued.token);
    REQUIRE(info.has_value());
    CHECK(info->device_id == "dev-1");
    CHECK(info->covers_user("alice"));
    CHECK(info->covers_user("bob"));
    CHECK_FALSE(info->covers_user("carol"));

    CHECK_FALSE(reg.authorize("not-a-token").has_value());
}

TEST_CASE("wrong secret and unknown device are indistinguishable") {
    DeviceRegistry reg(test_devices());
    auto wrong = reg.issue_token("dev-1", "bad");
    auto unknown = reg.issue_token("ghost", "bad");
    CHECK(wrong.outcome == AuthOutcome::Rejected);
    CHECK(unknown.outcome == AuthOutcome::Rejected);
    CHECK(wrong.token == unknown.token);
    CHECK(wrong.expires_at_ms == unknown.expires_at_ms);
}

TEST_CASE("sixth bad attempt within the window trips the rate limit") {
    DeviceRegistry reg(test_devices());
    for (int i = 0; i < 5; ++i) {
        CHECK(reg.issue_token("dev-1", "bad").outcome == AuthOutcome::Rejected);
    }
    // Limited now, even with the correct secret.
    CHECK(reg.issue_token("dev-1", "opensesame").outcome == AuthOutcome::RateLimited);
    // Other device ids are unaffected.
    CHECK(reg.issue_token("dev-2", "swordfish").outcome == AuthOutcome::Ok);
}

TEST_CASE("tokens expire after their TTL") {
    DeviceRegistry reg(test_devices(), std::chrono::seconds(0));
    auto issued = reg.issue_token("dev-1", "opensesame");
    REQUIRE(issued.outcome == AuthOutcome::Ok);
    CHECK_FALSE(reg.authorize(issued.token).has_value());
}

TEST_CASE("device table loading validates records") {
    TempDir dir;
    auto path = dir.path() / "devices.json";
    testsupport::write_file(
        path, R"([{"device_id":"d","device_secret":"s","registered_users":["alice"]}])");
    auto recs = load_device_records(path);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].registered_users == std::vector<std::string>{"alice"});

    testsupport::write_file(path, R"([{"device_id":"d"}])");
    CHECK_THROWS_AS(load_device_records(path), ValidationError);
    testsupport::write_file(path, R"({"device_id":"d"})");
    CHECK_THROWS_AS(load_device_records(path), ValidationError);
    testsupport::write_file(
        path, R"([{"device_id":"d","device_secret":"s","registered_users":["../x"]}])");
    CHECK_THROWS_AS(load_device_records(path), ValidationError);
}

TEST_CASE("store: full upload round trip") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "runs/a.bin", 200'000, 64 * 1024, 7);

    auto upload_id = store.init_upload(up.manifest);
    CHECK(store.usage("alice").reserved == up.manifest.total_size);

    put_all(store, upload_id, up);
    auto receipt = store.complete_upload(upload_id);
    CHECK(receipt.whole_digest == up.manifest.whole_digest);

    auto meta = store.lookup("alice", "runs/a.bin");
    REQUIRE(meta.has_value());
    CHECK(meta->object_id == receipt.object_id);
    CHECK(meta->total_size == up.manifest.total_size);
    CHECK(meta->version == 1);

    auto usage = store.usage("alice");
    CHECK(usage.reserved == 0);
    CHECK(usage.committed == up.manifest.total_size);

    // Bytes on disk are identical to the staged content.
    auto stored = testsupport::read_file(dir.path() / "root" / "alice" / "runs" / "a.bin");
    CHECK(core::sha256(stored.data(), stored.size()).value == up.manifest.whole_digest.value);

    // Spool is gone, ledger has exactly one line.
    CHECK(std::filesystem::is_empty(dir.path() / "root" / ".spool"));
    auto events = read_usage_ledger(store.ledger_path());
    REQUIRE(events.size() == 1);
    CHECK(events[0].owner == "alice");
    CHECK(events[0].size == up.manifest.total_size);
    CHECK(events[0].category == Category::experimental);
}

TEST_CASE("store: zero-byte file commits with no chunks") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "empty.bin", 0, 1024, 8);
    REQUIRE(up.chunks.empty());
    auto id = store.init_upload(up.manifest);
    auto receipt = store.complete_upload(id);
    CHECK(receipt.whole_digest.value == core::kEmptyInputSha256);
    auto handle = store.open_object("alice", "empty.bin");
    CHECK(handle.meta().total_size == 0);
}

TEST_CASE("store: quota is enforced including reservations") {
    TempDir dir;
    QuotaPolicy quota;
    quota.per_user_limit = 300'000;
    ObjectStore store(dir.path() / "root", quota);

    auto big = make_upload(dir, "alice", "big.bin", 400'000, 64 * 1024, 9);
    try {
        store.init_upload(big.manifest);
        FAIL("expected quota rejection");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kQuotaExceeded);
        CHECK(e.http_status == 413);
    }

    auto half = make_upload(dir, "alice", "h1.bin", 200'000, 64 * 1024, 10);
    auto id = store.init_upload(half.manifest);
    // Reservation of the open session counts against the next one.
    auto second = make_upload(dir, "alice", "h2.bin", 200'000, 64 * 1024, 11);
    CHECK_THROWS_AS(store.init_upload(second.manifest), ApiError);

    put_all(store, id, half);
    store.complete_upload(id);
    // Committed bytes keep counting after the session closes.
    CHECK_THROWS_AS(store.init_upload(second.manifest), ApiError);

    // Another user is unaffected.
    auto other = make_upload(dir, "bob", "b.bin", 200'000, 64 * 1024, 12);
    CHECK_NOTHROW(store.init_upload(other.manifest));
}

TEST_CASE("store: corrupted chunk is rejected and the session stays resumable") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "r.bin", 150'000, 64 * 1024, 13);
    auto id = store.init_upload(up.manifest);

    auto corrupted = up.chunks[1];
    corrupted[100] ^= 0x01;
    try {
        store.put_chunk(id, 1, corrupted);
        FAIL("expected digest mismatch");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kChunkDigestMismatch);
        CHECK(e.http_status == 422);
    }

    // Short payload with the right digest field is still a mismatch.
    CHECK_THROWS_AS(store.put_chunk(id, 0, up.chunks[0].substr(0, 10)), ApiError);
    // Out-of-range index.
    CHECK_THROWS_AS(store.put_chunk(id, 99, up.chunks[0]), ApiError);

    put_all(store, id, up);
    CHECK_NOTHROW(store.complete_upload(id));
}

TEST_CASE("store: duplicate puts are idempotent, divergent re-puts conflict") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "d.bin", 150'000, 64 * 1024, 14);
    auto id = store.init_upload(up.manifest);

    auto first = store.put_chunk(id, 0, up.chunks[0]);
    auto again = store.put_chunk(id, 0, up.chunks[0]);
    CHECK(first.digest == again.digest);

    try {
        store.put_chunk(id, 0, up.chunks[1]);
        FAIL("expected conflict");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kChunkConflict);
        CHECK(e.http_status == 409);
    }
}

TEST_CASE("store: completing with pending chunks lists them") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "p.bin", 5 * 4096, 4096, 15);
    REQUIRE(up.chunks.size() == 5);
    auto id = store.init_upload(up.manifest);
    store.put_chunk(id, 0, up.chunks[0]);
    store.put_chunk(id, 2, up.chunks[2]);
    store.put_chunk(id, 4, up.chunks[4]);
    try {
        store.complete_upload(id);
        FAIL("expected incomplete");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kUploadIncomplete);
        CHECK(e.detail["pending"] == nlohmann::json({1, 3}));
    }
}

TEST_CASE("store: whole-digest mismatch voids the session and frees the reservation") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "w.bin", 100'000, 64 * 1024, 16);
    // Per-chunk digests are intact; the whole-file digest is corrupted, so
    // every put succeeds and only reassembly can catch it.
    up.manifest.whole_digest.value[0] = up.manifest.whole_digest.value[0] == 'a' ? 'b' : 'a';

    auto id = store.init_upload(up.manifest);
    put_all(store, id, up);
    try {
        store.complete_upload(id);
        FAIL("expected integrity failure");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kIntegrityFailure);
        CHECK(e.http_status == 422);
    }
    CHECK_FALSE(store.lookup("alice", "w.bin").has_value());
    CHECK(store.usage("alice").reserved == 0);
    // The voided session is gone.
    CHECK_THROWS_AS(store.complete_upload(id), ApiError);
}

TEST_CASE("store: committing the same content twice is a no-op") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "same.bin", 120'000, 64 * 1024, 17);

    auto id1 = store.init_upload(up.manifest);
    put_all(store, id1, up);
    auto r1 = store.complete_upload(id1);

    auto up2 = up;
    up2.manifest.file_id = core::new_file_id();
    auto id2 = store.init_upload(up2.manifest);
    put_all(store, id2, up2);
    auto r2 = store.complete_upload(id2);

    CHECK(r1.object_id == r2.object_id);
    CHECK(read_usage_ledger(store.ledger_path()).size() == 1);
    CHECK(store.usage("alice").committed == up.manifest.total_size);
    CHECK(store.usage("alice").reserved == 0);
}

TEST_CASE("store: same path with different content creates a version") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto v1 = make_upload(dir, "alice", "data/x.bin", 100'000, 64 * 1024, 18);
    auto v2 = make_upload(dir, "alice", "data/x.bin", 130'000, 64 * 1024, 19);

    auto id1 = store.init_upload(v1.manifest);
    put_all(store, id1, v1);
    store.complete_upload(id1);

    auto id2 = store.init_upload(v2.manifest);
    put_all(store, id2, v2);
    store.complete_upload(id2);

    auto meta = store.lookup("alice", "data/x.bin");
    REQUIRE(meta.has_value());
    CHECK(meta->version == 2);
    CHECK(meta->whole_digest == v2.manifest.whole_digest);

    // Displaced bytes are preserved.
    auto displaced =
        testsupport::read_file(dir.path() / "root" / ".versions" / "alice" / "data" / "x.bin.v1");
    CHECK(core::sha256(displaced.data(), displaced.size()) == v1.manifest.whole_digest);

    // Both versions count against quota, and the ledger has both events.
    CHECK(store.usage("alice").committed ==
          v1.manifest.total_size + v2.manifest.total_size);
    CHECK(read_usage_ledger(store.ledger_path()).size() == 2);
}

TEST_CASE("store: ledger replay restores state across restarts") {
    TempDir dir;
    auto root = dir.path() / "root";
    auto v1 = make_upload(dir, "alice", "k.bin", 90'000, 32 * 1024, 20);
    auto v2 = make_upload(dir, "alice", "k.bin", 110'000, 32 * 1024, 21);
    {
        ObjectStore store(root, {});
        auto id = store.init_upload(v1.manifest);
        put_all(store, id, v1);
        store.complete_upload(id);
    }
    {
        ObjectStore store(root, {});
        auto meta = store.lookup("alice", "k.bin");
        REQUIRE(meta.has_value());
        CHECK(meta->whole_digest == v1.manifest.whole_digest);
        CHECK(store.usage("alice").committed == v1.manifest.total_size);

        // The version counter survives the restart.
        auto id = store.init_upload(v2.manifest);
        put_all(store, id, v2);
        store.complete_upload(id);
        CHECK(store.lookup("alice", "k.bin")->version == 2);
    }
}

TEST_CASE("store: torn ledger tail is discarded, earlier corruption refuses to start") {
    TempDir dir;
    auto root = dir.path() / "root";
    auto up = make_upload(dir, "alice", "t.bin", 50'000, 32 * 1024, 22);
    {
        ObjectStore store(root, {});
        auto id = store.init_upload(up.manifest);
        put_all(store, id, up);
        store.complete_upload(id);
    }
    auto ledger = root / ".ledger";

    {
        // Simulate a crash mid-append: partial JSON, no trailing newline.
        std::ofstream out(ledger, std::ios::app | std::ios::binary);
        out << R"({"category":"experimental","digest":"dead)";
    }
    {
        ObjectStore store(root, {});
        CHECK(store.lookup("alice", "t.bin").has_value());
        CHECK(read_usage_ledger(ledger).size() == 1);
    }
    // The replay truncated the torn tail away.
    {
        std::ifstream in(ledger, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        CHECK(content.back() == '\n');
        CHECK(content.find("dead") == std::string::npos);
    }

    {
        // Corruption before the final line is not recoverable.
        std::string content;
        {
            std::ifstream in(ledger, std::ios::binary);
            content.assign((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
        }
        std::ofstream out(ledger, std::ios::trunc | std::ios::binary);
        out << "garbage line\n" << content;
    }
    CHECK_THROWS_AS(ObjectStore(root, QuotaPolicy{}), ConsistencyError);
}

TEST_CASE("store: served bytes are re-verified against the recorded digest") {
    TempDir dir;
    ObjectStore store(dir.path() / "root", {});
    auto up = make_upload(dir, "alice", "v.bin", 80'000, 32 * 1024, 23);
    auto id = store.init_upload(up.manifest);
    put_all(store, id, up);
    store.complete_upload(id);

    CHECK_NOTHROW(store.open_object("alice", "v.bin"));

    // Flip one byte behind the store's back.
    auto path = dir.path() / "root" / "alice" / "v.bin";
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(1234);
        char c;
        f.seekg(1234);
        f.get(c);
        f.seekp(1234);
        f.put(static_cast<char>(c ^ 0x40));
    }
    try {
        store.open_object("alice", "v.bin");
        FAIL("expected verification failure");
    } catch (const ApiError& e) {
        CHECK(api_code(e) == wire::code::kInternal);
        CHECK(e.http_status == 500);
    }
}

TEST_CASE("store: concurrent reservations never exceed the hard limit") {
    TempDir dir;
    QuotaPolicy quota;
    quota.per_user_limit = 500'000;
    ObjectStore store(dir.path() / "root", quota);

    std::vector<Upload> uploads;
    for (int i = 0; i < 8; ++i) {
        uploads.push_back(make_upload(dir, "alice", "c" + std::to_string(i) + ".bin", 100'000,
                                      64 * 1024, 100 + i));
    }
    std::atomic<int> accepted{0};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] {
            try {
                store.init_upload(uploads[i].manifest);
                accepted.fetch_add(1);
            } catch (const ApiError&) {
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(accepted.load() == 5);
    auto usage = store.usage("alice");
    CHECK(usage.reserved + usage.committed <= quota.per_user_limit);
}

TEST_CASE("stats: empty ledger aggregates to zero") {
    auto report = aggregate_stats({}, 0, 1'000'000);
    CHECK(report.user_count == 0);
    CHECK(report.total_volume == 0);
    CHECK(report.file_count_total == 0);
    CHECK_FALSE(report.org_count.has_value());
    auto j = report.to_json();
    CHECK(j["volume_by_category"]["experimental"] == 0);
    CHECK(j["volume_by_category"]["theoretical"] == 0);
    CHECK(j["volume_by_category"]["uncategorized"] == 0);
}

TEST_CASE("stats: category sums stay additive on a proportioned fixture") {
    // 45 experimental units of 100k next to 361 theoretical units of 100k:
    // the same 4.5-to-36.1 volume split the production system reported.
    std::vector<CommitEvent> events;
    std::int64_t ts = core::parse_iso_utc("2024-01-15");
    for (int i = 0; i < 45; ++i) {
        events.push_back({ts, "u" + std::to_string(i % 7), Category::experimental, 100'000,
                          "id", "p"});
    }
    for (int i = 0; i < 361; ++i) {
        events.push_back({ts, "u" + std::to_string(i % 11), Category::theoretical, 100'000,
                          "id", "p"});
    }
    auto report = aggregate_stats(events, 0, ts + 1);
    CHECK(report.total_volume == 40'600'000);
    CHECK(report.volume_by_category[Category::experimental] == 4'500'000);
    CHECK(report.volume_by_category[Category::theoretical] == 36'100'000);
    CHECK(report.file_count_total == 406);
    CHECK(report.volume_by_category[Category::experimental] +
              report.volume_by_category[Category::theoretical] +
              report.volume_by_category[Category::uncategorized] ==
          report.total_volume);
    CHECK(report.user_count == 11);
}

TEST_CASE("stats: totals equal an independent fold over random events") {
    std::mt19937_64 rng(99);
    std::vector<CommitEvent> events;
    std::int64_t base = core::parse_iso_utc("2023-06-01");
    for (int i = 0; i < 1000; ++i) {
        CommitEvent ev;
        ev.ts_ms = base + static_cast<std::int64_t>(rng() % 86'400'000);
        ev.owner = "user" + std::to_string(rng() % 40);
        ev.category = static_cast<Category>(rng() % 3);
        ev.size = rng() % 1'000'000;
        events.push_back(ev);
    }
    auto report = aggregate_stats(events, 0, base + 90'000'000);

    std::uint64_t volume = 0, count = 0;
    std::set<std::string> users;
    std::map<Category, std::uint64_t> vol_by_cat;
    for (const auto& ev : events) {
        volume += ev.size;
        count += 1;
        users.insert(ev.owner);
        vol_by_cat[ev.category] += ev.size;
    }
    CHECK(report.total_volume == volume);
    CHECK(report.file_count_total == count);
    CHECK(report.user_count == users.size());
    for (auto& [cat, v] : vol_by_cat) CHECK(report.volume_by_category[cat] == v);
}

TEST_CASE("stats: cumulative monthly series is nondecreasing and window-exact") {
    std::mt19937_64 rng(7);
    std::vector<CommitEvent> events;
    std::int64_t from = core::parse_iso_utc("2024-01-01");
    std::int64_t to = core::parse_iso_utc("2024-05-01");
    for (int i = 0; i < 400; ++i) {
        CommitEvent ev;
        ev.ts_ms = from + static_cast<std::int64_t>(
                              rng() % static_cast<std::uint64_t>(to - from));
        ev.owner = "u" + std::to_string(rng() % 20);
        ev.category = static_cast<Category>(rng() % 3);
        ev.size = rng() % 10'000;
        events.push_back(ev);
    }
    auto series = cumulative_monthly(events, from, to);
    REQUIRE(series.size() == 4);
    CHECK(series[0].first == "2024-01");
    CHECK(series[3].first == "2024-04");

    std::uint64_t prev_volume = 0, prev_files = 0;
    for (const auto& [month, report] : series) {
        CHECK(report.total_volume >= prev_volume);
        CHECK(report.file_count_total >= prev_files);
        prev_volume = report.total_volume;
        prev_files = report.file_count_total;

        // Window-exactness: brute fold over [from, window end).
        std::uint64_t expect = 0;
        for (const auto& ev : events) {
            if (ev.ts_ms >= from && ev.ts_ms < report.to_ms) expect += ev.size;
        }
        CHECK(report.total_volume == expect);
    }
    CHECK(series.back().second.total_volume ==
          aggregate_stats(events, from, to).total_volume);
}

TEST_CASE("stats: org map controls org_count") {
    std::vector<CommitEvent> events;
    std::int64_t ts = core::parse_iso_utc("2024-02-02");
    for (const char* user : {"ann", "ben", "cid", "dee"}) {
        events.push_back({ts, user, Category::experimental, 100, "i", "p"});
    }
    OrgMap orgs{{"ann", "tohoku"}, {"ben", "tohoku"}, {"cid", "nims"}};
    auto report = aggregate_stats(events, 0, ts + 1, &orgs);
    REQUIRE(report.org_count.has_value());
    // Two mapped organizations plus an unmapped user standing for its own.
    CHECK(*report.org_count == 3);
    CHECK(report.user_count == 4);
}

namespace {

struct LiveServer {
    TempDir dir;
    StorageServer server;

    explicit LiveServer(std::function<void(ServerConfig&)> mutate = {})
        : server([&] {
              ServerConfig cfg;
              cfg.data_root = dir.path() / "root";
              cfg.devices = test_devices();
              if (mutate) mutate(cfg);
              return cfg;
          }()) {
        server.start();
    }

    httplib::Client client() {
        httplib::Client cli("127.0.0.1", server.port());
        cli.set_read_timeout(10, 0);
        return cli;
    }

    std::string token(const std::string& device = "dev-1",
                      const std::string& secret = "opensesame") {
        auto cli = client();
        auto res = cli.Post("/v1/auth/token",
                            nlohmann::json{{"device_id", device}, {"device_secret", secret}}.dump(),
                            "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 200);
        return wire::TokenResponse::from_json(nlohmann::json::parse(res->body)).token;
    }
};

httplib::Headers auth_headers(const std::string& token) {
    return {{wire::kAuthHeader, "Bearer " + token}};
}

}  // namespace

TEST_CASE("http: token endpoint, anti-enumeration, and rate limiting") {
    LiveServer live;
    auto cli = live.client();

    auto wrong = cli.Post("/v1/auth/token",
                          nlohmann::json{{"device_id", "dev-1"}, {"device_secret", "no"}}.dump(),
                          "application/json");
    auto unknown = cli.Post("/v1/auth/token",
                            nlohmann::json{{"device_id", "ghost"}, {"device_secret", "no"}}.dump(),
                            "application/json");
    REQUIRE(wrong);
    REQUIRE(unknown);
    CHECK(wrong->status == 401);
    CHECK(unknown->status == 401);
    // Identical bodies, byte for byte.
    CHECK(wrong->body == unknown->body);
    CHECK(nlohmann::json::parse(wrong->body)["code"] == wire::code::kAuthRejected);

    // dev-1 already has 1 failure; four more trip the limit.
    for (int i = 0; i < 4; ++i) {
        cli.Post("/v1/auth/token",
                 nlohmann::json{{"device_id", "dev-1"}, {"device_secret", "no"}}.dump(),
                 "application/json");
    }
    auto limited = cli.Post("/v1/auth/token",
                            nlohmann::json{{"device_id", "dev-1"}, {"device_secret", "opensesame"}}.dump(),
                            "application/json");
    REQUIRE(limited);
    CHECK(limited->status == 429);
    CHECK(nlohmann::json::parse(limited->body)["code"] == wire::code::kRateLimited);

    auto missing = cli.Post("/v1/auth/token", "{}", "application/json");
    REQUIRE(missing);
    CHECK(missing->status == 400);
}

TEST_CASE("http: full upload, download, and atomic visibility") {
    LiveServer live;
    auto token = live.token();
    auto cli = live.client();

    auto up = make_upload(live.dir, "alice", "exp/run1.dat", 300'000, 64 * 1024, 31);

    auto created = cli.Post("/v1/uploads", auth_headers(token),
                            up.manifest.to_canonical_json(), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 200);
    auto upload_id =
        wire::UploadCreated::from_json(nlohmann::json::parse(created->body)).upload_id;

    // Nothing visible before commit.
    auto early = cli.Get("/v1/objects/alice/exp/run1.dat", auth_headers(token));
    REQUIRE(early);
    CHECK(early->status == 404);

    for (std::size_t i = 0; i < up.chunks.size(); ++i) {
        auto headers = auth_headers(token);
        headers.emplace(wire::kChunkDigestHeader, up.manifest.chunks[i].digest.value);
        auto ack = cli.Put(wire::chunk_path(upload_id, i), headers, up.chunks[i],
                           "application/octet-stream");
        REQUIRE(ack);
        REQUIRE(ack->status == 200);
        auto body = wire::ChunkAckBody::from_json(nlohmann::json::parse(ack->body));
        CHECK(body.index == i);
        CHECK(body.digest == up.manifest.chunks[i].digest.value);
    }

    auto done = cli.Post(wire::complete_path(upload_id), auth_headers(token), "", "text/plain");
    REQUIRE(done);
    REQUIRE(done->status == 200);
    auto receipt = wire::CommitReceipt::from_json(nlohmann::json::parse(done->body));
    CHECK(receipt.whole_digest == up.manifest.whole_digest);

    auto got = cli.Get("/v1/objects/alice/exp/run1.dat", auth_headers(token));
    REQUIRE(got);
    REQUIRE(got->status == 200);
    CHECK(got->get_header_value("X-Content-Digest") == up.manifest.whole_digest.value);
    CHECK(core::sha256(got->body) == up.manifest.whole_digest);
}

TEST_CASE("http: bad chunk digest header is rejected") {
    LiveServer live;
    auto token = live.token();
    auto cli = live.client();
    auto up = make_upload(live.dir, "alice", "x.bin", 100'000, 64 * 1024, 32);

    auto created = cli.Post("/v1/uploads", auth_headers(token),
                            up.manifest.to_canonical_json(), "application/json");
    REQUIRE(created);
    auto upload_id =
        wire::UploadCreated::from_json(nlohmann::json::parse(created->body)).upload_id;

    auto headers = auth_headers(token);
    headers.emplace(wire::kChunkDigestHeader, std::string(64, '0'));
    auto res = cli.Put(wire::chunk_path(upload_id, 0), headers, up.chunks[0],
                       "application/octet-stream");
    REQUIRE(res);
    CHECK(res->status == 422);
    CHECK(nlohmann::json::parse(res->body)["code"] == wire::code::kChunkDigestMismatch);
}

TEST_CASE("http: authorization boundaries") {
    LiveServer live;
    auto token = live.token();  // dev-1: alice, bob
    auto cli = live.client();

    // Upload for a user the device is not registered for.
    auto up = make_upload(live.dir, "carol", "c.bin", 10'000, 4096, 33);
    auto created = cli.Post("/v1/uploads", auth_headers(token),
                            up.manifest.to_canonical_json(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 403);
    CHECK(nlohmann::json::parse(created->body)["code"] == wire::code::kNotAuthorized);

    // Unauthenticated request.
    auto no_token = cli.Post("/v1/uploads", up.manifest.to_canonical_json(), "application/json");
    REQUIRE(no_token);
    CHECK(no_token->status == 401);
    CHECK(nlohmann::json::parse(no_token->body)["code"] == wire::code::kAuthRequired);

    // Commit something as carol via dev-2, then probe it as dev-1.
    auto carol_token = live.token("dev-2", "swordfish");
    auto created2 = cli.Post("/v1/uploads", auth_headers(carol_token),
                             up.manifest.to_canonical_json(), "application/json");
    REQUIRE(created2);
    REQUIRE(created2->status == 200);
    auto upload_id =
        wire::UploadCreated::from_json(nlohmann::json::parse(created2->body)).upload_id;
    for (std::size_t i = 0; i < up.chunks.size(); ++i) {
        auto headers = auth_headers(carol_token);
        headers.emplace(wire::kChunkDigestHeader, up.manifest.chunks[i].digest.value);
        REQUIRE(cli.Put(wire::chunk_path(upload_id, i), headers, up.chunks[i],
                        "application/octet-stream")
                    ->status == 200);
    }
    REQUIRE(cli.Post(wire::complete_path(upload_id), auth_headers(carol_token), "", "text/plain")
                ->status == 200);

    auto cross = cli.Get("/v1/objects/carol/c.bin", auth_headers(token));
    auto missing = cli.Get("/v1/objects/alice/never-there.bin", auth_headers(token));
    REQUIRE(cross);
    REQUIRE(missing);
    CHECK(cross->status == 404);
    CHECK(missing->status == 404);
    // Byte-identical bodies: no way to tell "exists but not yours" apart.
    CHECK(cross->body == missing->body);

    // The owner can fetch it.
    auto own = cli.Get("/v1/objects/carol/c.bin", auth_headers(carol_token));
    REQUIRE(own);
    CHECK(own->status == 200);
}

TEST_CASE("http: expired tokens are rejected") {
    LiveServer live([](ServerConfig& cfg) { cfg.token_ttl = std::chrono::seconds(1); });
    auto token = live.token();
    auto cli = live.client();
    std::this_thread::sleep_for(std::chrono::milliseconds(1100));
    auto res = cli.Get("/v1/stats", auth_headers(token));
    REQUIRE(res);
    CHECK(res->status == 401);
    CHECK(nlohmann::json::parse(res->body)["code"] == wire::code::kAuthRequired);
}

TEST_CASE("http: stats endpoint aggregates committed uploads") {
    LiveServer live;
    auto token = live.token();
    auto cli = live.client();

    for (int i = 0; i < 3; ++i) {
        auto up = make_upload(live.dir, "alice", "s" + std::to_string(i) + ".bin", 50'000, 16384,
                              40 + i, i == 0 ? Category::theoretical : Category::experimental);
        auto created = cli.Post("/v1/uploads", auth_headers(token),
                                up.manifest.to_canonical_json(), "application/json");
        REQUIRE(created);
        REQUIRE(created->status == 200);
        auto upload_id =
            wire::UploadCreated::from_json(nlohmann::json::parse(created->body)).upload_id;
        for (std::size_t k = 0; k < up.chunks.size(); ++k) {
            auto headers = auth_headers(token);
            headers.emplace(wire::kChunkDigestHeader, up.manifest.chunks[k].digest.value);
            REQUIRE(cli.Put(wire::chunk_path(upload_id, k), headers, up.chunks[k],
                            "application/octet-stream")
                        ->status == 200);
        }
        REQUIRE(cli.Post(wire::complete_path(upload_id), auth_headers(token), "", "text/plain")
                    ->status == 200);
    }

    auto res = cli.Get("/v1/stats", auth_headers(token));
    REQUIRE(res);
    REQUIRE(res->status == 200);
    auto j = nlohmann::json::parse(res->body);
    CHECK(j["file_count_total"] == 3);
    CHECK(j["total_volume"] == 150'000);
    CHECK(j["user_count"] == 1);
    CHECK(j["volume_by_category"]["experimental"] == 100'000);
    CHECK(j["volume_by_category"]["theoretical"] == 50'000);

    auto series = cli.Get("/v1/stats?cumulative=month", auth_headers(token));
    REQUIRE(series);
    REQUIRE(series->status == 200);
    auto sj = nlohmann::json::parse(series->body);
    REQUIRE(sj["series"].is_array());
    CHECK(sj["series"].size() >= 1);

    auto bad = cli.Get("/v1/stats?from=lastweek", auth_headers(token));
    REQUIRE(bad);
    CHECK(bad->status == 400);
}

TEST_CASE("http: second server on the same data root refuses to start") {
    LiveServer live;
    ServerConfig cfg;
    cfg.data_root = live.dir.path() / "root";
    cfg.devices = test_devices();
    StorageServer second(cfg);
    CHECK_THROWS_AS(second.start(), Error);
}
