#pragma once

#include "pagrpo/advantage.hpp"
#include "pagrpo/config.hpp"
#include "pagrpo/core.hpp"
#include "pagrpo/error.hpp"
#include "pagrpo/eval.hpp"
#include "pagrpo/io.hpp"
#include "pagrpo/matrix.hpp"
#include "pagrpo/policy.hpp"
#include "pagrpo/report.hpp"
#include "pagrpo/reward.hpp"
#include "pagrpo/trainer.hpp"
