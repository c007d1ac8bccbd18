use std::io::Cursor;

use pcmotion_core::net::{merge_offline, read_message, Pacing};
use pcmotion_core::seqfile;
use pcmotion_core::{
    generate_sequence, MetricPipeline, ProjectionPlane, RegionOfInterest, RigidTransform, SensorConfig, SensorDevice,
    SynthConfig,
};

fn sensor(id: u32) -> SensorConfig {
    SensorConfig {
        sensor_id: id,
        extrinsic: RigidTransform::identity(),
        roi: RegionOfInterest::keyboard_default(),
        target: String::new(),
    }
}

#[test]
fn sequence_file_round_trip_preserves_metric() {
    let seq = generate_sequence(&SynthConfig { seed: 21, frame_count: 90, ..SynthConfig::default() }).unwrap();
    let bytes = seqfile::to_bytes(&seq).unwrap();
    let back = seqfile::from_bytes(&bytes).unwrap();
    assert_eq!(back.len(), 90);
    assert_eq!(back.nominal_rate_hz(), seq.nominal_rate_hz());
    assert_eq!(seqfile::to_bytes(&back).unwrap(), bytes);

    let pipeline = MetricPipeline::default_for(ProjectionPlane::XZ);
    let narrowed = pcmotion_core::FrameSequence::new(seq.frames().iter().map(|f| f.narrowed_to_f32()).collect(), 9.0).unwrap();
    assert_eq!(pipeline.metric(&back).unwrap(), pipeline.metric(&narrowed).unwrap());
}

#[test]
fn streamed_messages_match_offline_preparation() {
    let seq = generate_sequence(&SynthConfig { seed: 22, frame_count: 30, ..SynthConfig::default() }).unwrap();
    let cfg = sensor(5);
    let mut wire = Vec::new();
    let stats = SensorDevice::new(cfg.clone(), Pacing::AsFastAsPossible).stream_to(&seq, &mut wire).unwrap();
    assert_eq!(stats.messages, 30);
    assert_eq!(stats.bytes, wire.len());

    let offline = merge_offline(&[(&cfg, &seq)]).unwrap();
    let mut reader = Cursor::new(wire);
    let mut received = Vec::new();
    while let Some((frame, id)) = read_message(&mut reader).unwrap() {
        assert_eq!(id, 5);
        received.push(frame);
    }
    assert_eq!(received, offline);
}

#[test]
fn truncated_stream_is_an_error_not_eof() {
    let seq = generate_sequence(&SynthConfig { seed: 23, frame_count: 3, ..SynthConfig::default() }).unwrap();
    let mut wire = Vec::new();
    SensorDevice::new(sensor(1), Pacing::AsFastAsPossible).stream_to(&seq, &mut wire).unwrap();
    wire.truncate(wire.len() - 5);
    let mut reader = Cursor::new(wire);
    assert!(read_message(&mut reader).unwrap().is_some());
    assert!(read_message(&mut reader).unwrap().is_some());
    assert!(read_message(&mut reader).is_err());
}
