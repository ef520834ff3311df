#pragma once

#include "blockperm.hpp"
#include "capacity.hpp"
#include "channel.hpp"
#include "code.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "report.hpp"
#include "transform.hpp"
