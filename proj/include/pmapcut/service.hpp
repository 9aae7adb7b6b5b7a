#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "pmapcut/error.hpp"
#include "pmapcut/image_io.hpp"

namespace pmapcut {

/// Request bodies above this size are refused with 413.
inline constexpr std::size_t kMaxRequestBytes = std::size_t{32} << 20;

/// Standard alphabet with padding. Decoding throws ParseError on bad input.
std::string base64_encode(ByteView bytes);
Bytes base64_decode(std::string_view text);

/// 400 for malformed payloads, 422 for requests that parse but violate a
/// precondition, 500 for anything else.
int http_status(ErrorCode code);

struct HttpReply {
    int status = 200;
    std::string body; ///< always a JSON document
};

using QueryParams = std::map<std::string, std::string, std::less<>>;

// Pure request handlers; the server is a thin wrapper around these. Errors come
// back as {"error": <code>, "detail": <text>} with the mapped status.

HttpReply handle_health();
HttpReply handle_cutout(std::string_view body);
HttpReply handle_pmap_oracle(std::string_view body);
HttpReply handle_synth(const QueryParams& query);

/// Routes a request by method and path; unknown routes give 404 NotFound and
/// oversized bodies 413 PayloadTooLarge.
HttpReply dispatch(std::string_view method, std::string_view path, const QueryParams& query, std::string_view body);

/// Sets the spdlog level from PMAP_CUTOUT_LOG (trace, debug, info, warn,
/// error, critical, off); defaults to info.
void configure_logging();

struct ServeOptions {
    std::string bind_address = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    int threads = 0; ///< worker threads; 0 uses the hardware concurrency
};

/// HTTP front end. Construct, call bind() to learn the port, then listen()
/// blocks until stop() is called from another thread.
class Server {
public:
    explicit Server(ServeOptions options = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Throws IoFailure when the address cannot be bound.
    int bind();
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace pmapcut
