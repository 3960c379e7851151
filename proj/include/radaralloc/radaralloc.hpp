#pragma once

#include "radaralloc/common.hpp"
#include "radaralloc/config.hpp"
#include "radaralloc/env.hpp"
#include "radaralloc/fft.hpp"
#include "radaralloc/harness.hpp"
#include "radaralloc/io.hpp"
#include "radaralloc/nn.hpp"
#include "radaralloc/policies.hpp"
#include "radaralloc/rl.hpp"
#include "radaralloc/signal.hpp"
#include "radaralloc/traffic.hpp"
