#pragma once

#include "mynd/common.hpp"
#include "mynd/spectral.hpp"
#include "mynd/streamkit.hpp"
#include "mynd/features.hpp"
#include "mynd/stats.hpp"
#include "mynd/decoder.hpp"
#include "mynd/datastore/container.hpp"
#include "mynd/datastore/envelope.hpp"
#include "mynd/datastore/questionnaire_file.hpp"
#include "mynd/datastore/transport.hpp"
#include "mynd/datastore/upload_queue.hpp"
#include "mynd/session/questionnaire.hpp"
#include "mynd/session/study.hpp"
#include "mynd/session/engine.hpp"
#include "mynd/simkit.hpp"
#include "mynd/app/manifest.hpp"
#include "mynd/app/corpus.hpp"
#include "mynd/app/decode.hpp"
#include "mynd/app/simulate.hpp"
