use izhirv_core::dcu::{approx_divide, decay_step, DividerSelect};
use izhirv_core::fixedpoint::{Fixed, QFormat};
use izhirv_core::isa::{CustomOp, Instruction, Reg};
use izhirv_core::machine::{counters_for_trace, Machine, TimingConfig};
use izhirv_core::netsim::{build_8020, run_simulation, step_network, InputModel, Mode, NetState, N_EXCITATORY};
use izhirv_core::npu::{izh_step, NeuronParams, NmConfig, TimeStep, VuWord, V_TH};
use num_rational::Ratio;
use proptest::prelude::*;

fn qformat() -> impl Strategy<Value = QFormat> {
    prop::sample::select(QFormat::ALL.to_vec())
}

fn fixed_in(fmt: QFormat) -> impl Strategy<Value = Fixed> {
    let bits = 1 + fmt.int_bits() as u32 + fmt.frac_bits() as u32;
    let lo = -(1i64 << (bits - 1));
    let hi = (1i64 << (bits - 1)) - 1;
    (lo..=hi).prop_map(move |r| Fixed::from_raw(r, fmt).unwrap())
}

fn divider() -> impl Strategy<Value = DividerSelect> {
    prop::sample::select(DividerSelect::ALL.to_vec())
}

fn timestep() -> impl Strategy<Value = TimeStep> {
    prop::bool::ANY.prop_map(TimeStep::from_bit)
}

// Round-to-nearest-even of an exact rational, then clamp.
fn rne_clamp(x: Ratio<i128>, fmt: QFormat) -> i32 {
    let scaled = x * Ratio::from_integer(1i128 << fmt.frac_bits());
    let fl = scaled.floor();
    let rem = scaled - fl;
    let half = Ratio::new(1, 2);
    let mut r = *fl.numer();
    if rem > half || (rem == half && r & 1 == 1) {
        r += 1;
    }
    let bits = 1 + fmt.int_bits() as u32 + fmt.frac_bits() as u32;
    r.clamp(-(1i128 << (bits - 1)), (1i128 << (bits - 1)) - 1) as i32
}

fn exact(f: Fixed) -> Ratio<i128> {
    Ratio::new(f.raw() as i128, 1i128 << f.fmt().frac_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn real_roundtrip((fmt, raw) in qformat().prop_flat_map(|f| (Just(f), fixed_in(f)))) {
        let back = Fixed::from_real(raw.to_real(), fmt).unwrap();
        prop_assert_eq!(back, raw);
    }

    #[test]
    fn mul_matches_rational(
        (a, b, out) in (qformat(), qformat(), qformat())
            .prop_flat_map(|(fa, fb, fo)| (fixed_in(fa), fixed_in(fb), Just(fo)))
    ) {
        let want = rne_clamp(exact(a) * exact(b), out);
        prop_assert_eq!(a.mul(b, out).raw(), want);
    }

    #[test]
    fn add_sub_match_rational((a, b) in qformat().prop_flat_map(|f| (fixed_in(f), fixed_in(f)))) {
        prop_assert_eq!(a.add(b).unwrap().raw(), rne_clamp(exact(a) + exact(b), a.fmt()));
        prop_assert_eq!(a.sub(b).unwrap().raw(), rne_clamp(exact(a) - exact(b), a.fmt()));
    }

    #[test]
    fn saturation_is_monotone(x in -1e6f64..1e6, dx in 0.0f64..1e5, fmt in qformat()) {
        let lo = Fixed::saturating_from_real(x, fmt);
        let hi = Fixed::saturating_from_real(x + dx, fmt);
        prop_assert!(lo.raw() <= hi.raw());
    }

    #[test]
    fn shr_floors((a, k) in qformat().prop_flat_map(|f| (fixed_in(f), 1u32..=9))) {
        let want = (a.raw() as f64 / (1u64 << k) as f64).floor() as i32;
        prop_assert_eq!(a.shr(k).unwrap().raw(), want);
    }

    #[test]
    fn decay_never_grows(raw in any::<i32>(), d in divider(), h in timestep()) {
        let x = Fixed::from_raw(raw as i64, QFormat::Q15_16).unwrap();
        let y = decay_step(x, d, h);
        prop_assert!((y.raw() as i64).abs() <= (raw as i64).abs() + 1);
    }

    #[test]
    fn decay_is_nearly_odd(raw in (i32::MIN + 1)..=i32::MAX, d in divider(), h in timestep()) {
        let pos = decay_step(Fixed::from_raw(raw as i64, QFormat::Q15_16).unwrap(), d, h).raw() as i64;
        let neg = decay_step(Fixed::from_raw(-(raw as i64), QFormat::Q15_16).unwrap(), d, h).raw() as i64;
        // Each shift term floors; with n terms and the h shift the gap stays small.
        let slack = d.combo().shifts().len() as i64 + 1;
        prop_assert!((pos + neg).abs() <= slack, "{} {}", pos, neg);
    }

    #[test]
    fn approx_divide_error_bound(raw in any::<i32>(), d in divider()) {
        let q = approx_divide(raw, d) as i128;
        let ideal = Ratio::from_integer(raw as i128) / Ratio::from_integer(d.divisor() as i128);
        let v = d.combo().value();
        let combo = Ratio::new(*v.numer() as i128, *v.denom() as i128) * Ratio::from_integer(raw as i128);
        let abs = |r: Ratio<i128>| if r < Ratio::from_integer(0) { -r } else { r };
        let err = Ratio::from_integer(q) - ideal;
        let bound = abs(combo - ideal) + Ratio::from_integer(d.combo().shifts().len() as i128);
        prop_assert!(abs(err) <= bound);
    }

    #[test]
    fn power_of_two_dividers_are_exact(k in -(1i32 << 20)..(1i32 << 20), d in prop::sample::select(vec![2u32, 4, 8])) {
        let sel = DividerSelect::new(d).unwrap();
        let x = k * d as i32;
        prop_assert_eq!(approx_divide(x, sel), k);
    }

    #[test]
    fn custom_encode_decode(op in 0usize..4, rd in 0u8..32, rs1 in 0u8..32, rs2 in 0u8..32) {
        let op = CustomOp::ALL[op];
        let rs2 = if op == CustomOp::Nmldh { 0 } else { rs2 };
        let insn = Instruction::custom(op, Reg::x(rd), Reg::x(rs1), Reg::x(rs2));
        let word = insn.encode();
        prop_assert_eq!(word & 0x7f, 0b000_1011);
        prop_assert_eq!(Instruction::decode(word).unwrap(), insn);
    }

    #[test]
    fn decoded_words_reencode(word in any::<u32>()) {
        if let Ok(insn) = Instruction::decode(word) {
            prop_assert_eq!(Instruction::decode(insn.encode()).unwrap(), insn);
            prop_assert_eq!(Instruction::canonical_word(insn.encode()), insn.encode());
        }
    }

    #[test]
    fn pin_floors_v(v in -128.0f64..30.0, u in -64.0f64..64.0, i in -200.0f64..200.0, h in timestep()) {
        let params = NeuronParams::from_real(0.02, 0.2, -65.0, 8.0).unwrap();
        let cfg = NmConfig { params, h, pin: true };
        let vu = VuWord::from_real(v, u).unwrap();
        let r = izh_step(vu, Fixed::saturating_from_real(i, QFormat::Q15_16), &cfg);
        prop_assert!(!r.spike);
        prop_assert!(r.vu.v().raw() >= params.c().raw());
    }

    #[test]
    fn spike_ignores_current(v in 30.01f64..127.0, u in -64.0f64..64.0, i1 in -500.0f64..500.0, i2 in -500.0f64..500.0) {
        let params = NeuronParams::from_real(0.1, 0.2, -65.0, 2.0).unwrap();
        let cfg = NmConfig { params, h: TimeStep::Half, pin: false };
        let vu = VuWord::from_real(v, u).unwrap();
        prop_assume!(vu.v().raw() > V_TH);
        let a = izh_step(vu, Fixed::saturating_from_real(i1, QFormat::Q15_16), &cfg);
        let b = izh_step(vu, Fixed::saturating_from_real(i2, QFormat::Q15_16), &cfg);
        prop_assert_eq!(a, b);
        prop_assert!(a.spike);
        prop_assert_eq!(a.vu.v(), params.c());
        let want_u = (vu.u().raw() + params.d().convert(QFormat::Q7_8).raw()).clamp(i16::MIN as i32, i16::MAX as i32);
        prop_assert_eq!(a.vu.u().raw(), want_u);
    }
}

// Straight-line programs over a small register set so hazards are common.
fn straight_line() -> impl Strategy<Value = Vec<Instruction>> {
    let reg = || (0u8..6).prop_map(|r| Reg::x(10 + r));
    let insn = prop_oneof![
        (reg(), reg(), -50i32..50).prop_map(|(rd, rs1, imm)| Instruction::OpImm {
            op: izhirv_core::isa::ImmOp::Addi,
            rd,
            rs1,
            imm
        }),
        (reg(), reg(), reg()).prop_map(|(rd, rs1, rs2)| Instruction::Op {
            op: izhirv_core::isa::RegOp::Add,
            rd,
            rs1,
            rs2
        }),
        (reg(), reg(), reg()).prop_map(|(rd, rs1, rs2)| Instruction::Op {
            op: izhirv_core::isa::RegOp::Xor,
            rd,
            rs1,
            rs2
        }),
        (reg(), reg()).prop_map(|(rd, rs1)| Instruction::Nmldh { rd, rs1 }),
        (reg(), reg(), reg()).prop_map(|(rd, rs1, rs2)| Instruction::Nmldl { rd, rs1, rs2 }),
    ];
    prop::collection::vec(insn, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn counters_are_a_function_of_the_trace(prog in straight_line(), stall in 0u64..3) {
        let timing = TimingConfig { stall_cycles: stall, ..TimingConfig::default() };
        let mut words: Vec<u32> = prog.iter().map(Instruction::encode).collect();
        words.push(Instruction::Ebreak.encode());
        let mut m = Machine::new(64 * 1024).with_timing(timing);
        for (k, w) in words.iter().enumerate() {
            m.write_word(4 * k as u32, *w).unwrap();
        }
        m.set_pc(0);
        let report = m.run(1000).unwrap();
        let mut trace = prog.clone();
        trace.push(Instruction::Ebreak);
        let c = report.counters;
        prop_assert_eq!(c, counters_for_trace(&trace, &timing));
        prop_assert_eq!(c.n_instr, c.n_reginstr + c.n_updates + c.n_decays + c.n_config_instr);
        prop_assert!(c.ipc().unwrap() <= 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn raster_is_sorted_and_deterministic(seed in any::<u64>(), ticks in 0u32..40) {
        let spec = build_8020(seed);
        let r = run_simulation(&spec, ticks, Mode::Fixed);
        prop_assert!(r.events.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(r.events.iter().all(|&(t, n)| t < ticks.max(1) && (n as usize) < spec.len()));
        prop_assert_eq!(r, run_simulation(&spec, ticks, Mode::Fixed));
    }

    #[test]
    fn weights_keep_their_sign(seed in any::<u64>()) {
        let spec = build_8020(seed);
        for (pre, out) in spec.synapses.iter().enumerate() {
            for s in out {
                if pre < N_EXCITATORY {
                    prop_assert!(s.w >= 0);
                } else {
                    prop_assert!(s.w <= 0);
                }
            }
        }
    }
}

#[test]
fn excitatory_spikes_only_raise_currents() {
    // With the input silenced and no decay, a tick's current change is the
    // synaptic contribution alone.
    let mut spec = build_8020(3);
    let mut state = NetState::new(&spec);
    for _ in 0..20 {
        step_network(&spec, &mut state);
    }
    spec.input = InputModel::silent(spec.len());
    spec.decay = None;
    let spikes = state.last_spikes().to_vec();
    let exc_only = spikes.iter().all(|&s| (s as usize) < N_EXCITATORY);
    step_network(&spec, &mut state);
    if exc_only {
        assert!(state.i_syn.iter().all(|i| i.raw() >= 0));
    }
    let mut expect = vec![0i64; spec.len()];
    for &j in &spikes {
        for s in &spec.synapses[j as usize] {
            expect[s.target as usize] += s.w as i64;
        }
    }
    for (i, e) in state.i_syn.iter().zip(expect) {
        assert_eq!(i.raw() as i64, e.clamp(i32::MIN as i64, i32::MAX as i64));
    }
}
