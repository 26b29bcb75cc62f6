#pragma once

#include "swingcert/dos.hpp"
#include "swingcert/dynamics.hpp"
#include "swingcert/equilibrium.hpp"
#include "swingcert/error.hpp"
#include "swingcert/harness.hpp"
#include "swingcert/linalg.hpp"
#include "swingcert/lyapunov.hpp"
#include "swingcert/network.hpp"
