#pragma once

// Single include point for the bundled HTTP library. glibc's resolv.h,
// pulled in by it, leaks a `_res` object-like macro that mangles any later
// declaration using `_res` as an identifier (Eigen's matrix kernels do), so
// it must not escape this header.

#include <httplib.h>

#ifdef _res
#undef _res
#endif
