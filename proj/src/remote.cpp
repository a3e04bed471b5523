// Eigen goes first: httplib pulls in <resolv.h>, whose _res macro breaks
// Eigen's product kernels.
#include "cqrank/embedding_store.hpp"
#include "cqrank/error.hpp"

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace cqrank {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

Endpoint split_endpoint(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("endpoint '" + std::string(url) + "' lacks a scheme");
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, path_start));
    if (path_start != std::string_view::npos) {
        e.prefix = std::string(url.substr(path_start));
        while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    }
    return e;
}

// Runs `request` until it yields a response that is not a transport
// failure or 5xx. 4xx answers are returned to the caller immediately.
template <typename F>
httplib::Result with_retries(const RemoteOptions& options, std::string_view what, F&& request) {
    std::string last_error;
    for (int attempt = 1; attempt <= std::max(1, options.max_attempts); ++attempt) {
        httplib::Result res = request();
        if (res && res->status < 500) return res;
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < options.max_attempts) std::this_thread::sleep_for(options.retry_delay * attempt);
    }
    throw TransportError(std::string(what) + " failed after " + std::to_string(options.max_attempts) +
                         " attempt(s): " + last_error);
}

httplib::Client make_client(const Endpoint& e, const RemoteOptions& options) {
    httplib::Client client(e.origin);
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    client.set_write_timeout(options.timeout);
    return client;
}

nlohmann::json parse_body(const httplib::Result& res, std::string_view what) {
    if (res->status != 200)
        throw TransportError(std::string(what) + ": HTTP " + std::to_string(res->status) + ": " + res->body);
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw TransportError(std::string(what) + ": response is not a JSON object");
    return body;
}

}  // namespace

std::vector<EmbeddingVector> fetch_remote(std::string_view endpoint, std::span<const std::string> texts,
                                          const RemoteOptions& options) {
    if (texts.empty()) throw ValidationError("empty batch");
    auto e = split_endpoint(endpoint);
    auto client = make_client(e, options);
    std::string payload = nlohmann::json{{"texts", texts}}.dump();
    auto res = with_retries(options, "POST /embed", [&] {
        return client.Post(e.prefix + "/embed", payload, "application/json");
    });
    auto body = parse_body(res, "POST /embed");

    if (!body.contains("dim") || !body["dim"].is_number_integer() || body["dim"].get<long long>() <= 0)
        throw TransportError("POST /embed: missing or invalid 'dim'");
    auto dim = body["dim"].get<std::size_t>();
    if (options.expected_dim && *options.expected_dim != dim)
        throw ValidationError("embedding service dim " + std::to_string(dim) + " disagrees with expected dim " +
                              std::to_string(*options.expected_dim));
    const auto& vectors = body.value("vectors", nlohmann::json());
    if (!vectors.is_array() || vectors.size() != texts.size())
        throw TransportError("POST /embed: expected " + std::to_string(texts.size()) + " vectors");

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto& v = vectors[i];
        if (!v.is_array() || v.size() != dim)
            throw TransportError("POST /embed: vector " + std::to_string(i) + " does not have dim " +
                                 std::to_string(dim));
        EmbeddingVector vec(static_cast<Eigen::Index>(dim));
        for (std::size_t j = 0; j < dim; ++j) {
            if (!v[j].is_number()) throw TransportError("POST /embed: non-numeric value in vector " + std::to_string(i));
            vec[static_cast<Eigen::Index>(j)] = v[j].get<float>();
        }
        if (!vec.allFinite()) throw NumericError("POST /embed: non-finite value in vector " + std::to_string(i));
        out.push_back(std::move(vec));
    }
    return out;
}

ServiceInfo fetch_info(std::string_view endpoint, const RemoteOptions& options) {
    auto e = split_endpoint(endpoint);
    auto client = make_client(e, options);
    auto res = with_retries(options, "GET /info", [&] { return client.Get(e.prefix + "/info"); });
    auto body = parse_body(res, "GET /info");
    ServiceInfo info;
    if (!body.contains("dim") || !body["dim"].is_number_integer() || body["dim"].get<long long>() <= 0)
        throw TransportError("GET /info: missing or invalid 'dim'");
    info.dim = body["dim"].get<std::size_t>();
    info.model = body.value("model", std::string());
    return info;
}

}  // namespace cqrank
