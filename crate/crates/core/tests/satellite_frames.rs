use mfs_core::*;

/// 250 x 200 label raster of 500 clusters, each a 10 x 10 block.
fn blocks() -> LabelRaster {
    let (w, h) = (250, 200);
    let labels = (0..w * h)
        .map(|i| {
            let (row, col) = (i / w, i % w);
            ((row / 10) * 25 + col / 10 + 1) as u32
        })
        .collect();
    LabelRaster {
        width: w,
        height: h,
        labels,
    }
}

/// `count` points at distinct pixel centres inside cluster `label`.
fn points_in(label: u32, count: usize, next_id: &mut u64) -> Vec<UnitRecord> {
    let block = label as usize - 1;
    let (r0, c0) = ((block / 25) * 10, (block % 25) * 10);
    (0..count)
        .map(|j| {
            *next_id += 1;
            let (r, c) = (r0 + j / 10, c0 + j % 10);
            UnitRecord::new(*next_id)
                .at(c as f64 + 0.5, r as f64 + 0.5)
                .with_yield(3000.0 + j as f64)
        })
        .collect()
}

#[test]
fn seventy_one_points_in_six_of_five_hundred_clusters() {
    let labels = blocks();
    let allocation = [
        (7u32, 2usize),
        (40, 3),
        (123, 1),
        (250, 1),
        (311, 1),
        (499, 63),
    ];
    let mut next = 0;
    let mut points: Vec<UnitRecord> = allocation
        .iter()
        .flat_map(|&(l, m)| points_in(l, m, &mut next))
        .collect();
    assert_eq!(points.len(), 71);
    let frame = frame_from_labels(&points, &labels, &GeoTransform::default(), FrameId(2)).unwrap();
    assert_eq!(frame.spec.psus.len(), 500);
    assert_eq!(frame.sampled_psus(), 6);
    assert_eq!(frame.total_pixels(), 250 * 200);
    let realized: Vec<(u32, usize)> = frame.realized.iter().map(|(p, m)| (p.0, *m)).collect();
    assert_eq!(realized, allocation);

    frame.apply(&mut points);
    let pop = build_population(points, vec![frame.spec.clone()]).unwrap();
    let ids: Vec<UnitId> = pop.units().iter().map(|u| u.id).collect();
    let sample = impose_shared_sample(&pop, &ids).unwrap();
    let fs = sample.frame(FrameId(2)).unwrap();
    assert_eq!(fs.n(), 6);
    let ms: Vec<usize> = fs.selected.iter().map(|p| p.m()).collect();
    assert_eq!(ms, [2, 3, 1, 1, 1, 63]);
}

#[test]
fn all_points_in_one_cluster_leave_variance_undefined() {
    let labels = blocks();
    let mut next = 0;
    let mut points = points_in(17, 12, &mut next);
    let frame = frame_from_labels(&points, &labels, &GeoTransform::default(), FrameId(2)).unwrap();
    assert_eq!(frame.sampled_psus(), 1);
    frame.apply(&mut points);
    let pop = build_population(points, vec![frame.spec]).unwrap();
    let ids: Vec<UnitId> = pop.units().iter().map(|u| u.id).collect();
    let sample = impose_shared_sample(&pop, &ids).unwrap();
    let weights = compute_weights(&sample, &pop).unwrap();
    assert!(mf_mean(&sample, &weights).is_ok());
    assert!(matches!(
        mf_estimate(&sample, &weights, VarianceForm::Derived),
        Err(Error::BetweenPsuUndefined { n: 1, .. })
    ));
}

#[test]
fn clustered_raster_frame_covers_every_pixel() {
    let spec = SynthSpec::default();
    let synth = generate_population(&spec).unwrap();
    for ((id, raster), (_, model)) in synth.rasters.iter().zip(&synth.models) {
        let frame = synth.population.frame(*id).unwrap();
        assert_eq!(frame.total_ssus(), raster.len());
        assert_eq!(frame.n_psus(), model.k);
        let rebuilt = build_satellite_frame(synth.population.units(), raster, model, *id).unwrap();
        assert_eq!(rebuilt.total_pixels(), raster.len());
        assert_eq!(rebuilt.sampled_psus(), model.k);
    }
}
