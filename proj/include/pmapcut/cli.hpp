#pragma once

namespace pmapcut {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `pmapcut` tool: subcommands synth, cutout, grabcut,
/// detect (train / eval / score), bench and serve. Returns 0 on success, 1 on
/// a usage error (message and help on stderr) and 2 on a runtime error, which
/// is reported on stderr as {"error": <code>, "detail": <text>}.
int cli_main(int argc, const char* const* argv);

} // namespace pmapcut
