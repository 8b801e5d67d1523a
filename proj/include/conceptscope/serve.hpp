#pragma once

#include "conceptscope/reduce.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cscope {

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json; charset=utf-8";
};

/// Parses "a,b,c" into reals; throws ConfigError on malformed or non-finite entries.
std::vector<double> parse_vector(std::string_view text);

/// Sample indices whose projected position lies within `angle_deg` of v,
/// most aligned first (ties by index). Points at the origin count as
/// orthogonal to v.
std::vector<std::size_t> cone_members(const ProjectionBundle& bundle, std::span<const double> v, double angle_deg);

/// Endpoint logic, independent of any transport. Every method is const and
/// the bundle is never modified, so handlers may run concurrently.
class BundleService {
public:
    explicit BundleService(ProjectionBundle bundle, std::filesystem::path thumbnail_root = {});

    HttpReply meta() const;
    HttpReply points() const;
    HttpReply score(const std::optional<std::string>& cls, const std::optional<std::string>& v) const;
    HttpReply cone(const std::optional<std::string>& v, const std::optional<std::string>& angle,
                   const std::optional<std::string>& cls = std::nullopt) const;
    HttpReply thumbnail(const std::string& id) const;

    const ProjectionBundle& bundle() const noexcept { return bundle_; }

private:
    int resolve_class(const std::string& text) const;

    ProjectionBundle bundle_;
    std::filesystem::path thumbnail_root_;
    std::string meta_body_;
    std::string points_body_;
};

/// httplib front end for a BundleService.
class BundleServer {
public:
    explicit BundleServer(const BundleService& service);
    ~BundleServer();
    BundleServer(const BundleServer&) = delete;
    BundleServer& operator=(const BundleServer&) = delete;

    /// Binds host:port (port 0 picks a free port); returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace cscope
