#pragma once

namespace protosurv {

inline constexpr const char* kEngineVersion = "0.1.0";

inline const char* git_describe() {
#ifdef PROTOSURV_GIT_DESCRIBE
    return PROTOSURV_GIT_DESCRIBE;
#else
    return "unknown";
#endif
}

}  // namespace protosurv
