#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>

#include "tunet/gradcheck.hpp"
#include "tunet/run_config.hpp"

namespace tunet {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitGradcheck = 5,
};

// Maps a caught exception to the process exit status.
int exit_code_for(const std::exception& error);

// CRC-32 chained over the manifest and every file it references.
std::uint32_t corpus_crc32(const std::filesystem::path& manifest);

// Each command expects a finalized RunConfig, writes its outputs and a
// run_manifest.txt under cfg.out, and returns an exit status. Library errors
// propagate as exceptions.
int cmd_synth(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_eval(const RunConfig& cfg, std::ostream& out);
int cmd_predict(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, GradcheckFault fault = GradcheckFault::none);

}  // namespace tunet
