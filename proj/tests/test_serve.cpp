#include <doctest.h>

#include "conceptscope/bundle_io.hpp"
#include "conceptscope/error.hpp"
#include "conceptscope/serve.hpp"
#include "conceptscope/textio.hpp"
#include "helpers.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <thread>

using namespace cscope;
using nlohmann::json;

namespace {

void check_same_bundle(const ProjectionBundle& a, const ProjectionBundle& b) {
    CHECK(a.class_names == b.class_names);
    CHECK(a.ids == b.ids);
    CHECK(a.labels == b.labels);
    CHECK(a.points == b.points);
    CHECK(a.gradients == b.gradients);
    CHECK(a.gradient_kind == b.gradient_kind);
    CHECK(a.pca.mean == b.pca.mean);
    CHECK(a.pca.components == b.pca.components);
    CHECK(a.pca.variance_ratio == b.pca.variance_ratio);
    CHECK(a.pca.explained_variance == b.pca.explained_variance);
    CHECK(a.pca.total_variance == b.pca.total_variance);
    CHECK(a.thumbnails == b.thumbnails);
}

ProjectionBundle simulation_bundle() {
    const MlpModel& m = testutil::small_trained_model();
    const Dataset& d = testutil::small_dataset();
    const FeatureBatch batch = make_feature_batch(m, feature_matrix(m, d.samples));
    return build_bundle(batch.features, model_gradients(m, batch, GradientKind::Probability), d.labels,
                        {"class0", "class1", "class2"}, {});
}

} // namespace

TEST_CASE("bundle JSON uses the documented field names") {
    const auto j = json::parse(bundle_to_json(testutil::synthetic_bundle(12, 3, 2, 1)));
    for (const char* key : {"classes", "points", "gradients", "variance_ratios", "gradient_kind", "pca"}) CHECK(j.contains(key));
    CHECK(j["pca"].contains("mean"));
    CHECK(j["pca"].contains("components"));
    CHECK(j["points"][0].contains("id"));
    CHECK(j["points"][0]["z"].size() == 2);
    CHECK(j["points"][0].contains("label"));
    CHECK(j["gradients"].size() == 12);
    CHECK(j["gradients"][0].size() == 3);
    CHECK(j["gradients"][0][0].size() == 2);
}

TEST_CASE("static export round-trips bitwise") {
    ProjectionBundle b = simulation_bundle();
    testutil::TempDir dir("export");
    static_export(b, dir.path() / "site");
    check_same_bundle(b, load_bundle(dir.path() / "site" / kBundleFile));

    const auto index = json::parse(read_file(dir.path() / "site" / kIndexFile));
    CHECK(index["bundle"] == kBundleFile);
    CHECK(index["points"] == b.size());
    CHECK(index["components"] == 2);
    CHECK(index["class_counts"].size() == 3);

    b.thumbnails.assign(static_cast<std::size_t>(b.size()), "");
    b.thumbnails[3] = "img/3.png";
    check_same_bundle(b, bundle_from_json(bundle_to_json(b)));
}

TEST_CASE("client-side scoring from the exported JSON matches the service") {
    const ProjectionBundle b = simulation_bundle();
    const BundleService svc(b);
    const auto exported = json::parse(bundle_to_json(b));
    Rng r(71);
    for (int t = 0; t < 20; ++t) {
        const std::vector<double> v = {r.normal(), r.normal()};
        const int cls = static_cast<int>(r.below(3));
        // recompute as a browser would: plain dot products over the JSON arrays
        std::vector<double> client;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < exported["points"].size(); ++i) {
            if (exported["points"][i]["label"] != cls) continue;
            const auto& g = exported["gradients"][i][static_cast<std::size_t>(cls)];
            const double s = g[0].get<double>() * v[0] + g[1].get<double>() * v[1];
            client.push_back(s);
            pos += s > 0;
        }
        const auto reply = json::parse(svc.score(std::to_string(cls), format_real(v[0]) + "," + format_real(v[1])).body);
        const auto server = reply["scores"].get<std::vector<double>>();
        REQUIRE(server.size() == client.size());
        for (std::size_t i = 0; i < client.size(); ++i) CHECK(std::abs(server[i] - client[i]) <= 1e-9);
        CHECK(std::abs(reply["score"].get<double>() - static_cast<double>(pos) / client.size()) <= 1e-9);
    }
}

TEST_CASE("corrupt bundles are rejected with the path") {
    testutil::TempDir dir("corrupt");
    write_file(dir / "b.json", "{\"classes\": [\"a\"], \"points\": 3}");
    try {
        load_bundle(dir / "b.json");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("b.json") != std::string::npos);
    }
    write_file(dir / "c.json", "not json");
    CHECK_THROWS_AS(load_bundle(dir / "c.json"), IoError);
}

TEST_CASE("a 25000 x 50 x 2 export stays under 60 MB") {
    const ProjectionBundle b = testutil::synthetic_bundle(25000, 50, 2, 72);
    const std::string body = bundle_to_json(b);
    MESSAGE("bundle bytes: " << body.size());
    CHECK(body.size() <= 60u * 1000 * 1000);
}

TEST_CASE("/score delegates to projected_tcav bitwise and is pure") {
    const ProjectionBundle b = simulation_bundle();
    const BundleService svc(b);
    const std::vector<double> v = {0.7, -0.2};
    const auto reply = svc.score(std::string("1"), std::string("0.7,-0.2"));
    REQUIRE(reply.status == 200);
    const auto j = json::parse(reply.body);
    const ProjectedScore direct = projected_tcav(b, v, 1);
    CHECK(j["score"].get<double>() == direct.score);
    CHECK(j["scores"].get<std::vector<double>>() == direct.per_point);
    CHECK(svc.score(std::string("class1"), std::string("0.7,-0.2")).body == reply.body);
    CHECK(svc.score(std::string("1"), std::string("0.7,-0.2")).body == reply.body);
}

TEST_CASE("/score rejects bad input with 400") {
    const BundleService svc(testutil::synthetic_bundle(40, 3, 2, 73));
    CHECK(svc.score(std::string("0"), std::string("0,0")).status == 400);
    CHECK(svc.score(std::string("0"), std::string("1,x")).status == 400);
    CHECK(svc.score(std::string("0"), std::string("1,2,3")).status == 400);
    CHECK(svc.score(std::string("0"), std::string("")).status == 400);
    CHECK(svc.score(std::string("0"), std::string("nan,1")).status == 400);
    CHECK(svc.score(std::string("7"), std::string("1,0")).status == 400);
    CHECK(svc.score(std::string("zebra"), std::string("1,0")).status == 400);
    CHECK(svc.score(std::nullopt, std::string("1,0")).status == 400);
    CHECK(svc.score(std::string("0"), std::nullopt).status == 400);
    const auto err = json::parse(svc.score(std::string("0"), std::string("0,0")).body);
    CHECK(err.contains("error"));
}

TEST_CASE("/meta and /points") {
    const ProjectionBundle b = testutil::synthetic_bundle(30, 3, 2, 74);
    const BundleService svc(b);
    const auto meta = json::parse(svc.meta().body);
    CHECK(meta["classes"] == b.class_names);
    CHECK(meta["counts"] == std::vector<int>{10, 10, 10});
    CHECK(meta["variance_ratios"].size() == 2);
    CHECK(meta["gradient_kind"] == "probability");
    const auto pts = json::parse(svc.points().body)["points"];
    REQUIRE(pts.size() == 30);
    CHECK(pts[4]["id"] == "s4");
    CHECK(pts[4]["z"][1].get<double>() == b.points(4, 1));
    CHECK(pts[4]["label"] == b.labels[4]);
}

TEST_CASE("/cone membership") {
    const ProjectionBundle b = testutil::synthetic_bundle(400, 3, 2, 75);
    const BundleService svc(b);
    const auto ids_for = [&](const std::string& v, const std::string& angle) {
        const auto r = svc.cone(v, angle);
        REQUIRE(r.status == 200);
        return json::parse(r.body)["ids"].get<std::vector<std::string>>();
    };
    CHECK(ids_for("1,1", "180").size() == 400);
    CHECK(ids_for("1,1", "30") == ids_for("5,5", "30"));

    std::vector<std::string> prev;
    for (double angle : {5.0, 20.0, 45.0, 90.0, 135.0, 180.0}) {
        auto ids = ids_for("0.3,-1", format_real(angle));
        std::vector<std::string> a = prev, c = ids;
        std::sort(a.begin(), a.end());
        std::sort(c.begin(), c.end());
        CHECK(std::includes(c.begin(), c.end(), a.begin(), a.end()));
        prev = ids;
    }
    // ordered by alignment
    const std::vector<double> v = {0.3, -1.0};
    const auto order = cone_members(b, v, 90.0);
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto cosine = [&](std::size_t p) {
            const double x = b.points(p, 0), y = b.points(p, 1);
            return (x * v[0] + y * v[1]) / std::hypot(x, y);
        };
        CHECK(cosine(order[i - 1]) >= cosine(order[i]) - 1e-12);
    }
    CHECK(svc.cone(std::string("1,0"), std::string("0")).status == 400);
    CHECK(svc.cone(std::string("1,0"), std::string("181")).status == 400);
    CHECK(svc.cone(std::string("0,0"), std::string("30")).status == 400);
    CHECK(svc.cone(std::string("1,0"), std::string("abc")).status == 400);
    const auto only = json::parse(svc.cone(std::string("1,0"), std::string("180"), std::string("2")).body);
    CHECK(only["ids"].size() == 133);
}

TEST_CASE("/thumbnails") {
    testutil::TempDir dir("thumbs");
    ProjectionBundle b = testutil::synthetic_bundle(5, 2, 2, 76);
    b.thumbnails = {"img/a.png", "", "img/missing.png", "../secret.txt", "img/e.jpg"};
    write_file(dir / "img/a.png", "PNGDATA");
    write_file(dir / "img/e.jpg", "JPEGDATA");
    write_file(dir.path().parent_path() / "secret.txt", "nope");
    const BundleService svc(b, dir.path());
    const auto a = svc.thumbnail("s0");
    CHECK(a.status == 200);
    CHECK(a.body == "PNGDATA");
    CHECK(a.content_type == "image/png");
    CHECK(svc.thumbnail("s4").content_type == "image/jpeg");
    CHECK(svc.thumbnail("s1").status == 404);
    CHECK(svc.thumbnail("s2").status == 404);
    CHECK(svc.thumbnail("s3").status == 404);
    CHECK(svc.thumbnail("nobody").status == 404);
    CHECK(BundleService(testutil::synthetic_bundle(5, 2, 2, 77)).thumbnail("s0").status == 404);
    std::filesystem::remove(dir.path().parent_path() / "secret.txt");
}

TEST_CASE("HTTP server end to end") {
    const ProjectionBundle b = testutil::synthetic_bundle(300, 3, 2, 78);
    const BundleService svc(b);
    BundleServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    cli.set_connection_timeout(5);
    // wait for the listener
    httplib::Result res;
    for (int i = 0; i < 100 && !(res = cli.Get("/meta")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(res->get_header_value("Content-Type").find("application/json") == 0);
    CHECK(res->body == svc.meta().body);

    auto s = cli.Get("/score?class=2&v=1,0.5");
    REQUIRE(s);
    CHECK(s->status == 200);
    CHECK(s->body == svc.score(std::string("2"), std::string("1,0.5")).body);
    CHECK(cli.Get("/score?class=2&v=0,0")->status == 400);
    CHECK(cli.Get("/cone?v=1,0&angle=180")->status == 200);
    CHECK(cli.Get("/thumbnails/s1")->status == 404);
    CHECK(cli.Get("/points")->body == svc.points().body);

    // concurrent identical requests return identical bytes
    std::vector<std::string> bodies(8);
    std::vector<std::thread> clients;
    for (std::size_t t = 0; t < bodies.size(); ++t)
        clients.emplace_back([&, t] {
            httplib::Client c("127.0.0.1", port);
            if (auto r = c.Get("/score?class=1&v=-0.4,2")) bodies[t] = r->body;
        });
    for (auto& c : clients) c.join();
    for (const auto& body : bodies) CHECK(body == bodies[0]);

    server.stop();
    th.join();
}

TEST_CASE("/score latency at m=25000, K=50, k=10") {
    const BundleService svc(testutil::synthetic_bundle(25000, 50, 10, 79));
    std::vector<double> ms;
    for (int i = 0; i < 40; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto r = svc.score(std::to_string(i % 50), "1,2,3,4,5,6,7,8,9,10");
        ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
        CHECK(r.status == 200);
    }
    std::sort(ms.begin(), ms.end());
    const double p95 = ms[static_cast<std::size_t>(0.95 * (ms.size() - 1))];
    MESSAGE("/score p95 (ms): " << p95);
    CHECK(p95 < 30.0);
}
