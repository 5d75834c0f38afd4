#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace echodet {

namespace detail {
inline void fail(const char* expr, const std::string& msg, const char* file, int line) {
  std::ostringstream os;
  os << file << ":" << line << ": check failed (" << expr << ")";
  if (!msg.empty()) os << ": " << msg;
  throw std::runtime_error(os.str());
}
}  // namespace detail

}  // namespace echodet

#define ECHODET_CHECK(cond, msg)                                        \
  do {                                                                  \
    if (!(cond)) {                                                      \
      std::ostringstream echodet_os_;                                   \
      echodet_os_ << msg;                                               \
      ::echodet::detail::fail(#cond, echodet_os_.str(), __FILE__, __LINE__); \
    }                                                                   \
  } while (0)
