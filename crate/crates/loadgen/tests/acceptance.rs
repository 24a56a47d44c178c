//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines read as a scorecard. A FAIL
//! line is a finding, not a broken build; set ACCEPTANCE_STRICT=1 to turn any
//! FAIL into a non-zero exit.

use std::collections::HashSet;
use std::future::Future;
use std::time::{Duration, Instant};

use axs_core::chunker::script::{plan_speech, ScriptTiming};
use axs_core::chunker::Utterance;
use axs_core::chunker::{assemble_utterances, chunk_stream, merge_is_ambiguous, ChunkParams, TranscriptSegment};
use axs_core::emotion::{bundled_eval_set, evaluate, EmotionClass, EmotionLexicon};
use axs_core::exec::Execution;
use axs_core::landmark::synth::{corpus_glosses, write_corpus};
use axs_core::landmark::{compile_dictionary, load_dictionary, parse_landmark_file, validate_dictionary, CompileOptions};
use axs_core::landmark::{normalize_keyframes, process_clip, resample_30fps, DEFAULT_TRIM_THRESHOLD};
use axs_core::pipeline::{Participant, ParticipantPrefs, Role, Session, SessionSettings, MAX_PARTICIPANTS};
use axs_core::signgen::{
    assemble_animation, fingerspell_char, fingerspell_id, fingerspell_ids, fixtures, tokenize_to_glosses, GlossKind, Keyframe,
    SignClip, SignDictionary, DEFAULT_STOPWORDS, FPS,
};
use axs_core::stats;
use axs_core::summarizer::{extract_summary, SessionTranscript, SummaryConfig};
use axs_gateway::config::GatewayConfig;
use axs_gateway::server::Gateway;
use axs_loadgen::{run_load, sweep, LoadProfile, Pacing, Target};
use futures_util::{SinkExt, StreamExt};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

type Outcome = Result<String, String>;

fn sample<T: std::fmt::Debug>(runner: &mut TestRunner, strategy: &impl Strategy<Value = T>) -> T {
    strategy.new_tree(runner).expect("strategy yields a value").current()
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    }};
}

fn gateway_config() -> GatewayConfig {
    let mut c = GatewayConfig::layered("", std::iter::empty()).expect("default config");
    c.port = 0;
    c.log_level = "error".into();
    c
}

async fn with_gateway<F, Fut>(f: F) -> Outcome
where
    F: FnOnce(Target) -> Fut,
    Fut: Future<Output = Outcome>,
{
    let gw = Gateway::start(&gateway_config())
        .await
        .map_err(|e| format!("gateway did not start: {e}"))?;
    let target = Target::from_base(&gw.http_url("")).map_err(|e| e.to_string())?;
    let outcome = f(target).await;
    drop(gw);
    outcome
}

// ---------------------------------------------------------------- scalability

async fn scalability() -> Outcome {
    with_gateway(|target| async move {
        let started = Instant::now();
        let profile = LoadProfile {
            pacing: Pacing::Max,
            ramp_s: 1.0,
            ..LoadProfile::default()
        };
        let report = sweep(&profile, &axs_loadgen::run::SWEEP_LEVELS, &target)
            .await
            .map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        let sustained: Vec<_> = report.levels.iter().filter(|l| l.sustained()).collect();
        let rows: Vec<String> = report
            .levels
            .iter()
            .map(|l| format!("{}c {:.0}rps e{} m{}", l.clients, l.throughput_rps, l.errors, l.mismatches))
            .collect();
        let detail = format!(
            "max sustained {:?}; {}; {:.0}s",
            report.max_sustained,
            rows.join(", "),
            elapsed.as_secs_f64()
        );
        ensure!(!sustained.is_empty(), "no level sustained; {detail}");
        ensure!(
            sustained.iter().all(|l| l.errors == 0 && l.mismatches == 0),
            "errors or mismatches; {detail}"
        );
        ensure!(elapsed <= Duration::from_secs(600), "took longer than 10 minutes; {detail}");
        let top = sustained.last().expect("non-empty");
        if top.clients >= 1000 {
            ensure!(
                top.throughput_rps >= 900.0,
                "throughput {:.0} < 900 at 1000 clients; {detail}",
                top.throughput_rps
            );
        }
        Ok(detail)
    })
    .await
}

// ---------------------------------------------------------------- latency

async fn latency_budgets() -> Outcome {
    with_gateway(|target| async move {
        let profile = LoadProfile {
            clients: 100,
            pacing: Pacing::Realtime,
            ramp_s: 2.0,
            ..LoadProfile::default()
        };
        let r = run_load(&profile, &target).await.map_err(|e| e.to_string())?;
        let e2e = r.latency_ms.ok_or("no end-to-end samples")?;
        let emotion = r
            .stage(axs_core::backpressure::Stage::Emotion)
            .ok_or("no emotion stage samples")?;
        let detail = format!(
            "e2e p95 {:.0} ms over {} utterances, emotion p99 {:.2} ms, errors {}",
            e2e.p95, e2e.count, emotion.latency.p99, r.errors
        );
        ensure!(
            r.sustained() && r.errors == 0 && r.mismatches == 0,
            "run not clean: {:?}; {detail}",
            r.errors_by_code
        );
        ensure!(e2e.p95 < 2000.0, "{detail}");
        ensure!(emotion.latency.p99 < 200.0, "{detail}");
        Ok(detail)
    })
    .await
}

// ---------------------------------------------------------------- chunking

fn chunking() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let rate = 16_000u32;
    let cases = (1usize..120_000, 100u32..3000, 0.0f64..0.95);
    for case in 0..1000 {
        let (n, len_ms, frac) = sample(&mut runner, &cases);
        let overlap_ms = (len_ms as f64 * frac) as u32;
        let params = ChunkParams {
            chunk_len_ms: len_ms,
            overlap_ms,
            ..ChunkParams::default()
        };
        // every sample carries its own index, so slices can be located exactly
        let input: Vec<i16> = (0..n).map(|i| (i % 32_000) as i16).collect();
        let chunks = chunk_stream(&input, rate, params, "s", "a").map_err(|e| format!("case {case}: {e}"))?;
        let len = (len_ms as usize * rate as usize + 500) / 1000;
        let overlap = (overlap_ms as usize * rate as usize + 500) / 1000;
        let mut covered = 0usize;
        for (k, c) in chunks.iter().enumerate() {
            let start = (c.start_time * rate as f64).round() as usize;
            let content = (c.content_duration * rate as f64).round() as usize;
            ensure!(
                c.samples.len() == len,
                "case {case}: chunk {k} holds {} samples, not {len}",
                c.samples.len()
            );
            ensure!(
                c.samples[..content] == input[start..start + content],
                "case {case}: chunk {k} content is not input[{start}..]"
            );
            ensure!(
                c.samples[content..].iter().all(|&s| s == 0),
                "case {case}: chunk {k} padding is not silence"
            );
            ensure!(start <= covered, "case {case}: gap before chunk {k}");
            if k > 0 && k + 1 < chunks.len() {
                ensure!(
                    covered - start == overlap,
                    "case {case}: chunk {k} overlaps by {} not {overlap}",
                    covered - start
                );
            }
            covered = start + content;
        }
        ensure!(covered == n, "case {case}: covered {covered} of {n} samples");
    }

    let vocab = [
        "budget", "review", "we", "ship", "on", "friday", "please", "send", "notes", "today", "team", "plan", "design", "data",
        "report", "call", "agreed", "late", "yes", "no", "thanks", "schedule", "update", "screen", "share", "problem", "fix",
        "morning", "everyone", "question",
    ];
    let word = proptest::sample::select(vocab.to_vec());
    let stream = proptest::collection::vec(proptest::collection::vec(word, 1..12), 1..5);
    let (mut tokens, mut lost, mut duplicated) = (0usize, 0usize, 0usize);
    let (mut failed, mut failed_ambiguous, mut ambiguous_streams) = (0usize, 0usize, 0usize);
    let mut first_bad = None;
    for case in 0..1000 {
        let utterances: Vec<Vec<&str>> = sample(&mut runner, &stream);
        let lines: Vec<String> = utterances.iter().map(|u| u.join(" ")).collect();
        let plan = plan_speech(&lines, ScriptTiming::default(), ChunkParams::default());
        let segments: Vec<TranscriptSegment> = plan
            .chunks
            .iter()
            .map(|c| {
                TranscriptSegment::for_chunk(
                    &c.to_audio_chunk("s", "a", 8000),
                    c.oracle_text.clone().unwrap_or_default(),
                    1.0,
                )
            })
            .collect();
        let got: Vec<Vec<String>> = assemble_utterances(&segments, ChunkParams::default(), "a", "en")
            .into_iter()
            .map(|u| u.text.trim_end_matches('.').split(' ').map(str::to_lowercase).collect())
            .collect();
        let want: Vec<Vec<String>> = utterances.iter().map(|u| u.iter().map(|w| w.to_string()).collect()).collect();
        tokens += want.iter().map(Vec::len).sum::<usize>();
        let (l, d) = if got.len() == want.len() {
            want.iter().zip(&got).fold((0, 0), |(l, d), (w, g)| {
                (l + w.len().saturating_sub(g.len()), d + g.len().saturating_sub(w.len()))
            })
        } else {
            let (w, g) = (
                want.iter().map(Vec::len).sum::<usize>(),
                got.iter().map(Vec::len).sum::<usize>(),
            );
            (w.saturating_sub(g), g.saturating_sub(w))
        };
        lost += l;
        duplicated += d;
        let ambiguous = segments
            .windows(2)
            .any(|p| !p[0].is_silent() && merge_is_ambiguous(&p[0].tokens, &p[1].tokens));
        ambiguous_streams += usize::from(ambiguous);
        if got != want {
            failed += 1;
            failed_ambiguous += usize::from(ambiguous);
            if first_bad.is_none() {
                first_bad = Some(format!("case {case}: {want:?} came back as {got:?}"));
            }
        }
    }
    let detail = format!(
        "{failed} of 1000 streams wrong ({lost} lost / {duplicated} duplicated of {tokens} tokens); \
         {failed_ambiguous} of them cross a boundary with more than one textual stitch ({ambiguous_streams} streams had one)"
    );
    ensure!(failed == 0, "{detail}; first: {}", first_bad.unwrap_or_default());
    Ok(format!("1000 chunk geometries exact; {detail}"))
}

// ---------------------------------------------------------------- sign pipeline

fn test_dictionary() -> SignDictionary {
    let words = [
        "hello",
        "team",
        "budget",
        "review",
        "friday",
        "ship",
        "meeting",
        "plan",
        "thank_you",
        "good_morning",
        "data",
        "report",
        "yes",
        "no",
    ];
    let clips: Vec<SignClip> = fingerspell_ids()
        .iter()
        .map(String::as_str)
        .chain(words)
        .enumerate()
        .map(|(i, id)| fixtures::clip(&id.to_uppercase(), 2 + (i * 7) % 37, i as f64))
        .collect();
    SignDictionary::new(clips, 7).expect("test dictionary is complete")
}

fn bits(frames: &[Keyframe]) -> Vec<u64> {
    frames
        .iter()
        .flat_map(|f| std::iter::once(f.t).chain(f.points().flatten().copied()))
        .map(f64::to_bits)
        .collect()
}

fn sign_pipeline() -> Outcome {
    let started = Instant::now();
    let dict = test_dictionary();
    ensure!(dict.len() == 50, "test dictionary has {} entries", dict.len());
    let known = [
        "hello",
        "team",
        "budget",
        "review",
        "friday",
        "ship",
        "meeting",
        "plan",
        "data",
        "report",
        "yes",
        "no",
        "thank you",
        "good morning",
    ];
    let unknown = [
        "zebra",
        "quarterly",
        "o'neil",
        "café",
        "x42",
        "roadmap",
        "kpi",
        "naïve",
        "sync",
        "ok",
    ];
    let word = prop_oneof![
        4 => proptest::sample::select(known.to_vec()),
        3 => proptest::sample::select(unknown.to_vec()),
        1 => proptest::sample::select(DEFAULT_STOPWORDS.to_vec()),
    ];
    let sentence = (
        proptest::collection::vec(word, 0..10),
        proptest::sample::select(unknown.to_vec()),
        0.25f64..=2.0,
        0usize..8,
    );
    let mut runner = TestRunner::deterministic();
    let mut fingerspelled = 0;
    for case in 0..200 {
        let (mut words, oov, speed, transitions) = sample(&mut runner, &sentence);
        words.push(oov);
        let text = words.join(" ");
        let glosses = tokenize_to_glosses(&text, &dict);
        let seq =
            assemble_animation(&glosses, &dict, speed, transitions, "u").map_err(|e| format!("case {case} {text:?}: {e}"))?;

        // brute force: every frame materialised and counted
        let frames = seq.frames();
        let oracle: usize = glosses
            .iter()
            .map(|g| dict.get(&g.gloss_id).map_or(0, |c| c.frames.len()))
            .sum::<usize>()
            + transitions * (glosses.len() - 1);
        ensure!(
            frames.len() == oracle && seq.frame_count() == oracle,
            "case {case}: {} / {} frames, oracle {oracle}",
            frames.len(),
            seq.frame_count()
        );
        let duration = (oracle - 1) as f64 / (FPS * speed);
        ensure!(
            seq.total_duration() == duration,
            "case {case}: duration {} != {duration}",
            seq.total_duration()
        );
        ensure!(
            frames.last().map(|f| f.t) == Some(duration),
            "case {case}: last frame at {:?}",
            frames.last().map(|f| f.t)
        );

        // out-of-vocabulary words spell out completely, in order
        let tokens: Vec<String> = text
            .split(' ')
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .collect();
        for (i, token) in tokens.iter().enumerate() {
            let spelled: Vec<&str> = glosses
                .iter()
                .filter(|g| g.source_span == (i, i + 1))
                .map(|g| g.gloss_id.as_str())
                .collect();
            let spelled_kinds: HashSet<GlossKind> = glosses
                .iter()
                .filter(|g| g.source_span == (i, i + 1))
                .map(|g| g.kind)
                .collect();
            if unknown
                .iter()
                .any(|u| u.to_lowercase().trim_matches(|c: char| !c.is_alphanumeric()) == token)
            {
                let want: Vec<String> = token.chars().filter_map(fingerspell_char).map(fingerspell_id).collect();
                ensure!(spelled == want, "case {case}: {token:?} spelled {spelled:?}, want {want:?}");
                ensure!(
                    spelled_kinds == HashSet::from([GlossKind::Fingerspell]),
                    "case {case}: {token:?} mixes gloss kinds"
                );
                fingerspelled += 1;
            }
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("corpus");
    let out = dir.path().join("dict.axsd");
    let glosses = corpus_glosses(50);
    let files = write_corpus(&corpus, &glosses, 11).map_err(|e| e.to_string())?;
    let report = compile_dictionary(
        &corpus,
        &out,
        CompileOptions {
            strict: true,
            ..CompileOptions::default()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        report.entries_written == 86 && report.failures.is_empty(),
        "compiled {} entries, {} failures",
        report.entries_written,
        report.failures.len()
    );
    ensure!(
        validate_dictionary(&out).map_err(|e| e.to_string())?.is_valid(),
        "compiled artifact does not validate"
    );
    let loaded = load_dictionary(&out).map_err(|e| e.to_string())?;
    for (gloss, path) in glosses.iter().zip(&files) {
        let processed = process_clip(&parse_landmark_file(path).map_err(|e| e.to_string())?, DEFAULT_TRIM_THRESHOLD)
            .map_err(|e| e.to_string())?;
        let back = loaded.get(gloss).ok_or_else(|| format!("{gloss} missing after load"))?;
        ensure!(
            bits(&back.frames) == bits(&processed.frames),
            "{gloss} differs after the round trip"
        );
    }
    let elapsed = started.elapsed();
    ensure!(elapsed <= Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "200 sentences, {fingerspelled} OOV words spelled; 86-entry round trip bit-exact; {:.1}s",
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- emotion

fn emotion() -> Outcome {
    let lexicon = EmotionLexicon::bundled();
    let set = bundled_eval_set();
    ensure!(set.len() == 100, "eval set has {} sentences", set.len());
    let report = evaluate(&lexicon, &set, Execution::Sequential);
    let accuracy = report.accuracy();
    ensure!(accuracy >= 0.9, "accuracy {accuracy:.2}");
    let mut runner = TestRunner::deterministic();
    let text = "\\PC{0,80}";
    for _ in 0..2000 {
        let s: String = sample(&mut runner, &text);
        let (class, confidence) = lexicon.classify_text(&s);
        ensure!(EmotionClass::ALL.contains(&class), "{s:?} gave {class:?}");
        ensure!((0.0..=1.0).contains(&confidence), "{s:?} gave confidence {confidence}");
    }
    Ok(format!(
        "accuracy {:.0}% on {} sentences; 2000 fuzzed inputs classified",
        accuracy * 100.0,
        set.len()
    ))
}

// ---------------------------------------------------------------- summariser

fn utterance(i: usize, text: String) -> Utterance {
    Utterance {
        utterance_id: format!("u{i}"),
        speaker_id: "s".into(),
        seq: i as u64,
        tokens: text.split_whitespace().map(str::to_owned).collect(),
        text,
        t0: 0.0,
        t1: 0.0,
        language: "en".into(),
    }
}

fn summariser() -> Outcome {
    let config = SummaryConfig::default();
    let sentence = prop_oneof![
        "[A-Z][a-z]{1,8}( [a-z]{1,8}){0,8}[.!?]",
        "We (decided|agreed) to [a-z]{2,8} the [a-z]{2,8}\\.",
        "Sam will [a-z]{2,8} the [a-z]{2,8} by (Monday|Friday)\\.",
        "\\PC{1,40}",
    ];
    let window = proptest::collection::vec(sentence, 1..30);
    let mut runner = TestRunner::deterministic();
    let mut emitted = 0;
    for case in 0..500 {
        let sentences: Vec<String> = sample(&mut runner, &window);
        let mut t = SessionTranscript::new("s", "en");
        for (i, s) in sentences.iter().enumerate() {
            t.accumulate(&utterance(i, s.clone()), i as f64);
        }
        let w = t.on_demand(sentences.len() as f64).map_err(|e| format!("case {case}: {e}"))?;
        let text = w.text();
        let record = extract_summary("s", &w, "en", &config).map_err(|e| format!("case {case}: {e}"))?;
        for s in record.sentences() {
            ensure!(text.contains(s.as_str()), "case {case}: {s:?} is not in the window");
            emitted += 1;
        }
    }

    // scheduled trigger against a ticking clock, with speech at random times
    let (interval, tick) = (60.0, 1.0);
    let arrivals = proptest::collection::vec(0.0f64..1200.0, 1..200);
    for case in 0..200 {
        let mut times: Vec<f64> = sample(&mut runner, &arrivals);
        times.sort_by(f64::total_cmp);
        let mut t = SessionTranscript::new("s", "en");
        let (mut next, mut windows) = (0, Vec::new());
        let mut now = 0.0;
        while now <= 1300.0 {
            while next < times.len() && times[next] <= now {
                t.accumulate(&utterance(next, format!("Point {next} here.")), times[next]);
                next += 1;
            }
            if let Some(w) = t.schedule_tick(now, interval) {
                windows.push(w);
            }
            now += tick;
        }
        let mut prev_end = 0.0;
        let mut covered = 0;
        for w in &windows {
            ensure!(
                w.t_start == prev_end,
                "case {case}: window starts at {} after one ending at {prev_end}",
                w.t_start
            );
            ensure!(
                w.t_end - w.t_start >= interval,
                "case {case}: window shorter than the interval"
            );
            // fired at the first tick after the boundary it was due at, or the
            // first tick after speech arrived past that boundary
            let due = (w.t_start + interval).max(w.entries.first().map_or(0.0, |e| e.at));
            ensure!(w.t_end - due < tick + 1e-9, "case {case}: fired {} s late", w.t_end - due);
            ensure!(
                w.entries.iter().all(|e| e.at >= w.t_start && e.at <= w.t_end),
                "case {case}: entry outside its window"
            );
            covered += w.entries.len();
            prev_end = w.t_end;
        }
        ensure!(
            covered + t.pending().len() == times.len(),
            "case {case}: {covered} + {} entries of {}",
            t.pending().len(),
            times.len()
        );
    }
    Ok(format!(
        "500 windows, {emitted} sentences all verbatim; 200 schedules tile and fire within one tick"
    ))
}

// ---------------------------------------------------------------- room capacity

fn member(id: usize) -> Participant {
    Participant {
        participant_id: format!("p{id}"),
        display_name: format!("P{id}"),
        role: Role::Speaker,
        prefs: ParticipantPrefs::default(),
    }
}

async fn room_capacity() -> Outcome {
    // random join/leave traffic against a counting model
    let ops = proptest::collection::vec((any::<bool>(), 0usize..20), 1..120);
    let mut runner = TestRunner::deterministic();
    let mut refusals = 0;
    for case in 0..500 {
        let ops: Vec<(bool, usize)> = sample(&mut runner, &ops);
        let mut session = Session::new("room", SessionSettings::default()).map_err(|e| e.to_string())?;
        let mut model: Vec<usize> = Vec::new();
        for (join, id) in ops {
            if join {
                let result = session.join(member(id));
                match (model.contains(&id), model.len() >= MAX_PARTICIPANTS) {
                    (true, _) => ensure!(result.is_err(), "case {case}: duplicate p{id} admitted"),
                    (false, true) => {
                        let code = result.err().map(|e| e.code());
                        ensure!(code == Some("ROOM_FULL"), "case {case}: ninth join gave {code:?}");
                        refusals += 1;
                    }
                    (false, false) => {
                        ensure!(result.is_ok(), "case {case}: join refused below capacity");
                        model.push(id);
                    }
                }
            } else {
                session.leave(&format!("p{id}"));
                model.retain(|m| *m != id);
            }
            ensure!(
                session.participants().len() == model.len(),
                "case {case}: {} members, model {}",
                session.participants().len(),
                model.len()
            );
            ensure!(
                session.participants().len() <= MAX_PARTICIPANTS,
                "case {case}: room over capacity"
            );
        }
    }

    // concurrent joins through the gateway
    with_gateway(|target| async move {
        for round in 0..5 {
            let n = 9 + round * 2;
            let url = target.ws_url.clone();
            let joins = (0..n).map(|i| {
                let url = url.clone();
                async move {
                    let (mut ws, _) = tokio_tungstenite::connect_async(url.as_str())
                        .await
                        .map_err(|e| e.to_string())?;
                    let env = json!({ "type": "join", "session_id": format!("burst{round}"), "sender_id": format!("b{i}"),
                        "event_id": "j", "ts_ms": 0, "payload": { "display_name": "b", "role": "viewer", "prefs": {} } });
                    ws.send(Message::Text(env.to_string().into()))
                        .await
                        .map_err(|e| e.to_string())?;
                    let mut max_roster = 0usize;
                    let verdict = loop {
                        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
                            .await
                            .map_err(|_| "no reply to join".to_owned())?;
                        let Some(Ok(Message::Text(t))) = msg else {
                            return Err("socket closed".to_owned());
                        };
                        let v: Value = serde_json::from_str(&t).map_err(|e| e.to_string())?;
                        if let Some(roster) = v["payload"]["participants"].as_array() {
                            max_roster = max_roster.max(roster.len());
                        }
                        match v["type"].as_str() {
                            Some("joined") => break "joined".to_owned(),
                            Some("error") => break v["payload"]["code"].as_str().unwrap_or("?").to_owned(),
                            _ => {}
                        }
                    };
                    Ok::<_, String>((verdict, max_roster, ws))
                }
            });
            let results = futures_util::future::join_all(joins)
                .await
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let joined = results.iter().filter(|r| r.0 == "joined").count();
            let full = results.iter().filter(|r| r.0 == "ROOM_FULL").count();
            let roster = results.iter().map(|r| r.1).max().unwrap_or(0);
            ensure!(
                joined == 8 && full == n - 8,
                "round {round}: {joined} joined, {full} ROOM_FULL of {n}"
            );
            ensure!(roster <= 8, "round {round}: a roster of {roster} was observed");
        }
        Ok(String::new())
    })
    .await?;
    Ok(format!(
        "500 join/leave traces ({refusals} ROOM_FULL, never over 8); 5 concurrent bursts of 9..17 admit exactly 8"
    ))
}

// ---------------------------------------------------------------- numerics

fn blank(t: f64) -> Keyframe {
    Keyframe {
        t,
        pose: vec![[0.0; 3]; 33],
        left_hand: vec![[0.0; 3]; 21],
        right_hand: vec![[0.0; 3]; 21],
        face: None,
    }
}

fn numerics() -> Outcome {
    let mut runner = TestRunner::deterministic();
    // resampling linear trajectories: every landmark coordinate is a + b·t
    let clip = (
        proptest::collection::vec(0.005f64..0.08, 2..60),
        -1.0f64..1.0,
        -2.0f64..2.0,
        0.0f64..5.0,
    );
    let mut worst = 0.0f64;
    for case in 0..500 {
        let (gaps, a, b, t0) = sample(&mut runner, &clip);
        let mut times = vec![t0];
        for g in &gaps {
            times.push(times.last().expect("non-empty") + g);
        }
        if times.last().expect("non-empty") - t0 < 1.0 / FPS {
            continue;
        }
        let coord = |t: f64, i: usize, d: usize| a * (1.0 + i as f64 * 0.01) + b * t * (d as f64 + 1.0);
        let frames: Vec<Keyframe> = times
            .iter()
            .map(|&t| {
                let mut f = blank(t);
                for (i, p) in f.pose.iter_mut().chain(&mut f.left_hand).chain(&mut f.right_hand).enumerate() {
                    *p = [coord(t, i, 0), coord(t, i, 1), coord(t, i, 2)];
                }
                f
            })
            .collect();
        let out = resample_30fps(&frames).map_err(|e| format!("case {case}: {e}"))?;
        for (k, f) in out.iter().enumerate() {
            ensure!((f.t - k as f64 / FPS).abs() < 1e-12, "case {case}: frame {k} at {}", f.t);
            let abs = t0 + f.t;
            for (i, p) in f.points().enumerate() {
                for (d, v) in p.iter().enumerate() {
                    worst = worst.max((v - coord(abs, i, d)).abs());
                }
            }
        }
    }
    ensure!(worst <= 1e-9, "resample error {worst:e}");

    // normalisation applied twice changes nothing
    let point = (-3.0f64..3.0, -3.0f64..3.0, -1.0f64..1.0);
    let cloud = proptest::collection::vec(point, 75);
    let mut worst_norm = 0.0f64;
    for case in 0..300 {
        let pts: Vec<(f64, f64, f64)> = sample(&mut runner, &cloud);
        let mut f = blank(0.0);
        for (slot, (x, y, z)) in f.pose.iter_mut().chain(&mut f.left_hand).chain(&mut f.right_hand).zip(pts) {
            *slot = [x, y, z];
        }
        // keep the shoulders apart so the frame is well defined
        f.pose[11] = [0.4, 0.1, 0.0];
        f.pose[12] = [-0.5, -0.2, 0.1];
        let once = normalize_keyframes(std::slice::from_ref(&f)).map_err(|e| format!("case {case}: {e}"))?;
        let twice = normalize_keyframes(&once).map_err(|e| format!("case {case}: {e}"))?;
        for (p, q) in once[0].points().zip(twice[0].points()) {
            for d in 0..3 {
                worst_norm = worst_norm.max((p[d] - q[d]).abs());
            }
        }
    }
    ensure!(worst_norm <= 1e-9, "normalisation drift {worst_norm:e}");

    // percentile estimator against a full sort
    let samples = proptest::collection::vec(0.0f64..10_000.0, 1..500);
    for case in 0..1000 {
        let data: Vec<f64> = sample(&mut runner, &samples);
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        for p in [50.0, 90.0, 95.0, 99.0, 100.0] {
            let got = stats::percentile(&mut data.clone(), p).ok_or("no percentile")?;
            let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
            // within one sample position of the nearest-rank value
            let lo = sorted[rank.saturating_sub(2)];
            let hi = sorted[rank.min(sorted.len() - 1)];
            ensure!(
                got >= lo && got <= hi,
                "case {case}: p{p} = {got}, sorted rank {rank} is {}",
                sorted[rank - 1]
            );
        }
    }
    Ok(format!(
        "resample error {worst:.1e}, normalisation drift {worst_norm:.1e}, 1000 percentile sets within one rank"
    ))
}

fn report(name: &str, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {name}: {why}");
            false
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // cargo passes libtest flags; listing should not run anything
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only = args.iter().skip(1).find(|a| !a.starts_with('-')).cloned();
    let wanted = |name: &str| only.as_deref().is_none_or(|o| name.contains(o));
    let rt = tokio::runtime::Runtime::new().expect("runtime");

    let mut ok = true;
    if wanted("scalability") {
        ok &= report("scalability", rt.block_on(scalability()));
    }
    if wanted("latency") {
        ok &= report("latency-budgets", rt.block_on(latency_budgets()));
    }
    if wanted("chunking") {
        ok &= report("chunking-properties", chunking());
    }
    if wanted("sign") {
        ok &= report("sign-pipeline-oracles", sign_pipeline());
    }
    if wanted("emotion") {
        ok &= report("emotion-baseline", emotion());
    }
    if wanted("summariser") {
        ok &= report("summariser", summariser());
    }
    if wanted("room") {
        ok &= report("room-capacity", rt.block_on(room_capacity()));
    }
    if wanted("numeric") {
        ok &= report("numerical-checks", numerics());
    }
    println!(
        "acceptance: {}",
        if ok { "all criteria pass" } else { "see FAIL lines above" }
    );
    if !ok && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
