#include "dustnet/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>

#include "dustnet/errors.hpp"
#include "dustnet/lfsr.hpp"
#include "dustnet/signal_io.hpp"

#ifdef DUSTNET_HAS_OPENMP
#include <omp.h>
#endif

namespace dustnet {
namespace {

/// Echo at the transducer for TX cycles [first_cycle, end) of `pulse` and the given traces.
Waveform render_echo(const PulseDescriptor& pulse, double start, std::int64_t first_cycle,
                     std::span<const GammaTrace> traces, const ChannelConfig& ch, double fs) {
  const Waveform tx = synthesize_tx_span(pulse, ch, fs, start, first_cycle, pulse.tx_cycles());
  const Waveform incident = propagate(tx, ch);
  Waveform echo = Waveform::zeros(incident.size(), incident.sample_rate, incident.t0);
  for (const auto& t : traces) {
    const Waveform b = backscatter(incident, t, ch.backscatter_efficiency);
    for (std::size_t i = 0; i < echo.size(); ++i) echo.samples[i] += b.samples[i];
  }
  return propagate(echo, ch);
}

/// Samples of `rx` on the grid span [open, close), zero where rx does not reach.
Waveform gate_samples(const Waveform& rx, const RxGate& gate, double fs) {
  const std::int64_t lo = std::llround(gate.open * fs);
  const std::int64_t hi = std::llround(gate.close * fs);
  Waveform out = Waveform::zeros(static_cast<std::size_t>(std::max<std::int64_t>(hi - lo, 0)), fs,
                                 static_cast<double>(lo) / fs);
  if (rx.empty()) return out;
  const std::int64_t base = rx.grid_index();
  for (std::int64_t n = std::max(lo, base); n < std::min(hi, base + static_cast<std::int64_t>(rx.size())); ++n) {
    out.samples[static_cast<std::size_t>(n - lo)] = rx.samples[static_cast<std::size_t>(n - base)];
  }
  return out;
}

SymbolSchedule window_schedule(const RxGate& gate, int cps, std::size_t count, const DemodConfig& demod) {
  const double f = demod.carrier_freq;
  return {gate.open, static_cast<double>(cps) / f, count, demod.settle_guard_cycles / f};
}

}  // namespace

PulseObservation render_and_demod(const PlannedPulse& p, const KernelContext& ctx, bool want_eye) {
  PulseObservation obs;
  obs.pulse_index = p.pulse_index;
  if (!p.owner || p.descriptor == nullptr) return obs;
  const double fs = ctx.sim_rate;
  const auto& desc = *p.descriptor;

  Waveform rx;
  if (!p.transmissions.empty()) {
    std::vector<GammaTrace> traces;
    traces.reserve(p.transmissions.size());
    for (const auto& t : p.transmissions) traces.push_back(t.trace);
    // Gamma is zero during the charge-up, so only the last cycle before the window is rendered.
    const std::int64_t first = std::max<std::int64_t>(uplink_window_offset(desc) - 1, 0);
    rx = render_echo(desc, p.start, first, traces, ctx.channel, fs);
  }
  Waveform seg = gate_samples(rx, p.gate, fs);
  Rng rng = make_rng(ctx.root_seed, Stream::ChannelNoise, static_cast<std::uint64_t>(p.pulse_index));
  add_noise_inplace(seg.samples, ctx.channel.noise_rms, rng);

  const auto sched = window_schedule(p.gate, desc.cycles_per_symbol, p.symbols, ctx.demod);
  const auto env = demodulate_envelope(seg, ctx.demod);
  obs.envelope_fallback = env.fallback;
  obs.voltages = sample_symbols(env.differential, sched).echo_voltages;
  if (want_eye) {
    SymbolSchedule fine = sched;
    fine.symbol_duration = sched.symbol_duration / kEyePointsPerSymbol;
    fine.count = sched.count * kEyePointsPerSymbol;
    fine.settle_guard = fine.symbol_duration / 2.0;
    obs.eye = sample_symbols(env.differential, fine).echo_voltages;
  }
  obs.rx_offset = seg.grid_index();
  if (ctx.keep_samples) obs.rx_samples = std::move(seg.samples);
  return obs;
}

std::vector<PulseObservation> render_batch_serial(std::span<const PlannedPulse> pulses, const KernelContext& ctx,
                                                  std::int64_t eye_below_index) {
  std::vector<PulseObservation> out(pulses.size());
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    out[i] = render_and_demod(pulses[i], ctx, pulses[i].pulse_index < eye_below_index);
  }
  return out;
}

std::vector<PulseObservation> render_batch_parallel(std::span<const PlannedPulse> pulses, const KernelContext& ctx,
                                                    std::int64_t eye_below_index) {
  std::vector<PulseObservation> out(pulses.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(pulses.size());
#ifdef DUSTNET_HAS_OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& p = pulses[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = render_and_demod(p, ctx, p.pulse_index < eye_below_index);
    } catch (...) {
#ifdef DUSTNET_HAS_OPENMP
#pragma omp critical(dustnet_kernel_error)
#endif
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

Simulator::Simulator(const Scenario& scenario, bool parallel)
    : scenario_(scenario), parallel_(parallel) {
  scenario_.validate();
  frame_ = scenario_.frame();
  slot_owner_.assign(static_cast<std::size_t>(frame_.pulses_per_frame), std::nullopt);
  for (std::size_t i = 0; i < scenario_.implants.size(); ++i) {
    const auto& spec = scenario_.implants[i];
    LinkConfig power_on;
    power_on.implant_id = spec.config.implant_id;
    Implant implant(power_on, scenario_.piezo_for(i), scenario_.afe, scenario_.seed);
    if (spec.input_signal) {
      const Waveform in = load_signal(*spec.input_signal);
      const auto n = static_cast<std::size_t>(std::floor(in.duration() * scenario_.afe.sample_rate));
      implant.set_input(resample_windowed_sinc(in, scenario_.afe.sample_rate, in.t0, n));
    }
    implants_.push_back(std::move(implant));
    uplink_pulses_.push_back(build_uplink_pulse(frame_, spec.config, scenario_.channel));
    slot_owner_[static_cast<std::size_t>(spec.config.uplink_index - 1)] = i;
  }
}

KernelContext Simulator::kernel_context(bool keep_samples) const {
  KernelContext ctx;
  ctx.channel = scenario_.channel;
  ctx.sim_rate = scenario_.sim_rate();
  ctx.demod.carrier_freq = scenario_.channel.carrier_freq;
  ctx.root_seed = scenario_.seed;
  ctx.keep_samples = keep_samples;
  return ctx;
}

AckObservation Simulator::send_config(const PulseDescriptor& pulse) {
  const auto& ch = scenario_.channel;
  const double fs = scenario_.sim_rate();
  const double start = clock_;
  clock_ = start + pulse.duration();

  ConfigEvent ev;
  ev.target_id = pulse.target_id;
  ev.start = start;
  const Waveform incident = propagate(synthesize_tx(pulse, ch, fs, start), ch);
  std::vector<GammaTrace> acks;
  for (auto& implant : implants_) {
    auto rx = implant.receive_config(incident, start + ch.time_of_flight(), ch.carrier_freq);
    ev.actions.emplace_back(implant.id(), rx.result.action);
    if (rx.ack) acks.push_back(std::move(*rx.ack));
  }

  const RxGate gate = rx_gate(pulse, start, pulse.duration(), ch);
  Waveform rx;
  if (!acks.empty()) {
    Waveform echo = Waveform::zeros(incident.size(), incident.sample_rate, incident.t0);
    for (const auto& t : acks) {
      const Waveform b = backscatter(incident, t, ch.backscatter_efficiency);
      for (std::size_t i = 0; i < echo.size(); ++i) echo.samples[i] += b.samples[i];
    }
    rx = propagate(echo, ch);
  }
  Waveform seg = gate_samples(rx, gate, fs);
  Rng rng = make_rng(scenario_.seed, Stream::ConfigNoise, config_pulses_++);
  add_noise_inplace(seg.samples, ch.noise_rms, rng);

  DemodConfig demod;
  demod.carrier_freq = ch.carrier_freq;
  const auto frame = demodulate_segment(seg, demod, window_schedule(gate, pulse.cycles_per_symbol, kAckSymbols, demod));
  ev.ack = decode_ack(frame.echo_voltages, pulse.target_id);
  config_log_.push_back(ev);
  return ev.ack;
}

std::vector<ConfigEvent> Simulator::configure() {
  const std::size_t first = config_log_.size();
  for (const auto& spec : scenario_.implants) {
    send_config(build_config_pulse(spec.config, spec.config.implant_id, scenario_.channel));
  }
  send_config(build_config_pulse(scenario_.implants.front().config, 0, scenario_.channel));
  uplink_start_ = clock_;
  next_pulse_ = 0;
  return {config_log_.begin() + static_cast<std::ptrdiff_t>(first), config_log_.end()};
}

std::vector<PlannedPulse> Simulator::plan_pulses(std::int64_t count) {
  const auto& ch = scenario_.channel;
  const double tof = ch.time_of_flight();
  const double f = ch.carrier_freq;
  std::vector<PlannedPulse> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
  for (std::int64_t c = 0; c < count; ++c) {
    PlannedPulse p;
    p.pulse_index = next_pulse_++;
    p.frame = p.pulse_index / frame_.pulses_per_frame;
    p.slot = static_cast<int>(p.pulse_index % frame_.pulses_per_frame);
    p.start = uplink_start_ + static_cast<double>(p.pulse_index) * frame_.pulse_period;
    p.owner = slot_owner_[static_cast<std::size_t>(p.slot)];
    if (p.owner) {
      const auto& spec = scenario_.implants[*p.owner];
      p.owner_id = spec.config.implant_id;
      p.descriptor = &uplink_pulses_[*p.owner];
      p.gate = rx_gate(*p.descriptor, p.start, frame_.pulse_period, ch);
      p.symbols = kUplinkHeader.size() + kCountFieldBits + static_cast<std::size_t>(spec.config.data_symbols());
    }
    for (std::size_t i = 0; i < implants_.size(); ++i) {
      auto& implant = implants_[i];
      const auto& desc = uplink_pulses_[i];
      const std::int64_t window = uplink_window_offset(desc);
      auto pkt = implant.on_uplink_pulse(p.start + tof + static_cast<double>(window) / f);
      if (!pkt || pkt->count == 0) continue;
      const auto& cfg = implant.state().config;
      std::uint64_t clamps = 0;
      GammaTrace trace = codes_to_trace(pkt->codes, implant.piezo(), cfg.idac_unit_current, p.start + tof, f, window,
                                        cfg.cycles_per_symbol, &clamps);
      implant.count_clamps(clamps);
      p.transmissions.push_back({i, implant.id(), std::move(*pkt), std::move(trace)});
    }
    out.push_back(std::move(p));
  }
  return out;
}

UplinkResult Simulator::run_uplink(std::int64_t frames, DnwfWriter* recorder) {
  UplinkResult r;
  r.frames = frames;
  r.start_time = uplink_start_ + static_cast<double>(next_pulse_) * frame_.pulse_period;
  r.duration = static_cast<double>(frames) * frame_.frame_duration;
  const auto ctx = kernel_context(recorder != nullptr);
  const double fs = ctx.sim_rate;
  const std::int64_t rec_base = std::llround(r.start_time * fs);
  const std::int64_t total = frames * frame_.pulses_per_frame;
  const std::int64_t eye_below = next_pulse_ + static_cast<std::int64_t>(scenario_.sim.eye_packets) * frame_.pulses_per_frame;

  for (std::int64_t done = 0; done < total;) {
    const std::int64_t n = std::min<std::int64_t>(scenario_.sim.batch_pulses, total - done);
    std::vector<PlannedPulse> plan;
    try {
      plan = plan_pulses(n);
    } catch (const ScheduleError& e) {
      const std::int64_t frame = (next_pulse_ - 1) / frame_.pulses_per_frame;
      std::string detail = e.what();
      detail.erase(0, e.term().size() + 2);
      throw ScheduleError(e.term(), "frame " + std::to_string(frame) + ": " + detail);
    }
    const auto obs = parallel_ ? render_batch_parallel(plan, ctx, eye_below) : render_batch_serial(plan, ctx, eye_below);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto& p = plan[i];
      const auto& o = obs[i];
      ScheduleEntry e;
      e.pulse_index = p.pulse_index;
      e.frame = p.frame;
      e.slot = p.slot;
      e.start = p.start;
      if (p.owner) {
        const auto& cfg = scenario_.implants[*p.owner].config;
        e.gate = p.gate;
        e.implant_id = p.owner_id;
        e.symbol_start = p.gate.open;
        e.symbol_duration = static_cast<double>(cfg.cycles_per_symbol) / scenario_.channel.carrier_freq;
        e.header_symbols = static_cast<int>(kUplinkHeader.size()) + kCountFieldBits;
        e.max_data_symbols = cfg.data_symbols();
        e.ask_levels = cfg.ask_levels;
        e.word_bits = cfg.word_bits();
        e.max_words = cfg.samples_per_packet;
        e.lfsr_seed = lfsr_seed_for(cfg.implant_id);
        if (p.transmissions.size() != 1) ++r.exclusivity_violations;
        r.observations.push_back({p.pulse_index, p.owner_id, cfg.ask_levels, cfg.word_bits(), cfg.samples_per_packet,
                                  o.voltages});
        if (o.envelope_fallback) ++r.envelope_fallbacks;
        if (!o.eye.empty()) {
          EyeTrace eye{p.pulse_index, p.owner_id, cfg.ask_levels, e.symbol_duration, {}, o.eye};
          for (const auto& t : p.transmissions) {
            if (t.implant_id == p.owner_id) eye.codes = t.packet.codes;
          }
          r.eyes.push_back(std::move(eye));
        }
        if (recorder && !o.rx_samples.empty()) {
          recorder->write_at(static_cast<std::uint64_t>(o.rx_offset - rec_base), o.rx_samples);
        }
      } else if (!p.transmissions.empty()) {
        ++r.exclusivity_violations;
      }
      for (const auto& t : p.transmissions) r.truth.push_back({p.pulse_index, t.implant_id, t.packet.codes, t.packet.words});
      r.schedule.push_back(e);
    }
    done += n;
  }
  return r;
}

}  // namespace dustnet
