//! Per-image-set item generation for every task template.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::derive::{
    allocentric_offset, camera_distance, ego_offset, format_pixel, object_size, pair_distance, scene_footprint_area,
    vertical_relation, visible_side_with_gap,
};
use super::distractors::{make_distractors, round1, shuffle_options, DistractorPolicy};
use super::motion::{corrupted_label_sets, describe_motion, CameraMotion};
use super::{
    AnswerKind, Capability, Derivation, NumericAnswer, QAItem, QaError, QaParams, Reference, SetContext, SizeAxis,
    TemplateBank, Unit,
};
use crate::geometry::{classify_quadrant, classify_sector, Quadrant, Sector};
use crate::rng::derive_rng;
use crate::scene::{ObjectId, PointId, SceneObject};
use crate::visibility::{project_point, ObjectSide, PixelPoint};

/// Candidate counts and rejection reasons, keyed by template id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub emitted: BTreeMap<String, usize>,
    pub rejected: BTreeMap<String, usize>,
    pub notes: Vec<String>,
}

impl GenerationStats {
    fn reject(&mut self, reason: &str) {
        *self.rejected.entry(reason.to_owned()).or_default() += 1;
    }

    pub fn merge(&mut self, other: GenerationStats) {
        for (k, v) in other.emitted {
            *self.emitted.entry(k).or_default() += v;
        }
        for (k, v) in other.rejected {
            *self.rejected.entry(k).or_default() += v;
        }
        self.notes.extend(other.notes);
    }
}

enum DraftAnswer {
    Mcq { options: Vec<String>, correct: usize },
    Numeric { raw: f64, unit: Unit },
}

struct Draft {
    slots: BTreeMap<String, String>,
    object_ids: Vec<ObjectId>,
    reference: Reference,
    derivation: Derivation,
    answer: DraftAnswer,
}

fn slots(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| ((*k).to_owned(), v.clone())).collect()
}

fn pairs<T: Copy>(v: &[T]) -> impl Iterator<Item = (T, T)> + '_ {
    (0..v.len()).flat_map(move |i| (i + 1..v.len()).map(move |j| (v[i], v[j])))
}

fn ordered_pairs<T: Copy>(v: &[T]) -> impl Iterator<Item = (T, T)> + '_ {
    (0..v.len()).flat_map(move |i| (0..v.len()).filter(move |&j| j != i).map(move |j| (v[i], v[j])))
}

fn labels<I: IntoIterator<Item = &'static str>>(it: I) -> Vec<String> {
    it.into_iter().map(String::from).collect()
}

/// Generates every enabled template's items for one image set. Each
/// template draws from its own stream keyed by (seed, scene, set, template),
/// so toggling one capability leaves the others' output unchanged.
pub fn generate_for_set(
    ctx: &SetContext,
    params: &QaParams,
    bank: &TemplateBank,
    seed: u64,
) -> (Vec<QAItem>, GenerationStats) {
    let mut items = Vec::new();
    let mut stats = GenerationStats::default();
    let set_label = ctx.image_set_id();
    for template in super::ALL_TEMPLATES {
        let cap = Capability::of_template(template).unwrap();
        if !params.capabilities.enabled(cap) {
            continue;
        }
        let mut rng = derive_rng(seed, &[ctx.scene.scene_id.as_str(), &set_label, template]);
        let drafts = match template {
            "mm_camera_distance" => gen_camera_distance(ctx),
            "mm_pair_distance" => gen_pair_distance(ctx),
            "mm_object_height" => gen_object_size(ctx, SizeAxis::Height),
            "mm_object_length" => gen_object_size(ctx, SizeAxis::Longest),
            "mm_scene_size" => gen_scene_size(ctx),
            "sr_ego_direction" => gen_ego_direction(ctx, params, &mut rng, &mut stats),
            "sr_vertical" => gen_vertical(ctx, params, &mut rng, &mut stats),
            "sr_near_far" => gen_near_far(ctx, params, &mut rng, &mut stats),
            "sr_large_small" => gen_large_small(ctx, params, &mut rng, &mut stats),
            "mr_visible_side" => gen_visible_side(ctx, params, &mut rng, &mut stats),
            "pt_point_correspondence" => gen_point_correspondence(ctx, params, &mut rng, &mut stats),
            "pt_object_correspondence" => gen_object_correspondence(ctx, &mut rng, &mut stats),
            "pt_camera_motion" => gen_camera_motion(ctx, params, &mut rng, &mut stats),
            _ => gen_allocentric(ctx, params, &mut rng, &mut stats),
        };
        let drafts = match drafts {
            Ok(d) => d,
            Err(e) => {
                stats.notes.push(format!("{}/{}/{template}: {e}", ctx.scene.scene_id, set_label));
                continue;
            }
        };
        let mut n = 0;
        for d in drafts {
            match finish(ctx, bank, template, cap, n, d, params, &mut rng) {
                Ok(Some(item)) => {
                    items.push(item);
                    n += 1;
                }
                Ok(None) => stats.reject("insufficient_distractors"),
                Err(e) => stats.notes.push(format!("{template}: {e}")),
            }
        }
        if n > 0 {
            stats.emitted.insert(template.to_owned(), n);
        }
    }
    (items, stats)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ctx: &SetContext,
    bank: &TemplateBank,
    template: &str,
    capability: Capability,
    n: usize,
    draft: Draft,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
) -> Result<Option<QAItem>, QaError> {
    let question = bank.render(template, 0, &draft.slots)?;
    let (answer_kind, options, correct_index, numeric_answer) = match draft.answer {
        DraftAnswer::Mcq { options, correct } => (AnswerKind::Mcq, options, Some(correct), None),
        DraftAnswer::Numeric { raw, unit } => {
            let value = round1(raw);
            if params.numeric_as_mcq {
                match make_distractors(&format!("{value:.1}"), &[], 3, DistractorPolicy::Numeric, rng) {
                    Ok((opts, idx)) => (AnswerKind::Mcq, opts, Some(idx), Some(NumericAnswer { value, unit })),
                    Err(QaError::InsufficientDistractors { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            } else {
                (AnswerKind::Numeric, Vec::new(), None, Some(NumericAnswer { value, unit }))
            }
        }
    };
    Ok(Some(QAItem {
        qa_id: format!("{}-{}-{}-{}", ctx.scene.scene_id, ctx.image_set_id(), template, n),
        capability,
        task: template.to_owned(),
        question,
        answer_kind,
        options,
        correct_index,
        numeric_answer,
        scene_id: ctx.scene.scene_id.clone(),
        image_set_id: ctx.image_set_id(),
        frame_ids: ctx.set.frame_ids.clone(),
        object_ids: draft.object_ids,
        reference: draft.reference,
        slots: draft.slots,
        paraphrase: 0,
        derivation: draft.derivation,
        image_refs: ctx.image_refs(),
        no_vision: false,
    }))
}

fn numeric(raw: f64, unit: Unit) -> DraftAnswer {
    DraftAnswer::Numeric { raw, unit }
}

fn gen_camera_distance(ctx: &SetContext) -> Result<Vec<Draft>, QaError> {
    let mut out = Vec::new();
    for f in &ctx.frames {
        for o in ctx.nameable_in(&f.frame_id) {
            let meters = camera_distance(f, o);
            out.push(Draft {
                slots: slots(&[("F", ctx.image_number(&f.frame_id).to_string()), ("A", o.display_name())]),
                object_ids: vec![o.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::CameraDistance {
                    frame_id: f.frame_id.clone(),
                    object_id: o.object_id.clone(),
                    meters,
                },
                answer: numeric(meters, Unit::Meters),
            });
        }
    }
    Ok(out)
}

fn gen_pair_distance(ctx: &SetContext) -> Result<Vec<Draft>, QaError> {
    let objs = ctx.nameable_anywhere();
    Ok(pairs(&objs)
        .map(|(a, b)| {
            let meters = pair_distance(a, b);
            Draft {
                slots: slots(&[("A", a.display_name()), ("B", b.display_name())]),
                object_ids: vec![a.object_id.clone(), b.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::PairDistance { a: a.object_id.clone(), b: b.object_id.clone(), meters },
                answer: numeric(meters, Unit::Meters),
            }
        })
        .collect())
}

fn gen_object_size(ctx: &SetContext, axis: SizeAxis) -> Result<Vec<Draft>, QaError> {
    Ok(ctx
        .nameable_anywhere()
        .into_iter()
        .map(|o| {
            let meters = object_size(o, axis);
            Draft {
                slots: slots(&[("A", o.display_name())]),
                object_ids: vec![o.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::ObjectSize { object_id: o.object_id.clone(), axis, meters },
                answer: numeric(meters, Unit::Meters),
            }
        })
        .collect())
}

fn gen_scene_size(ctx: &SetContext) -> Result<Vec<Draft>, QaError> {
    let area = scene_footprint_area(&ctx.scene.objects);
    if area <= 0.0 {
        return Ok(Vec::new());
    }
    Ok(vec![Draft {
        slots: BTreeMap::new(),
        object_ids: Vec::new(),
        reference: Reference::NoObject,
        derivation: Derivation::SceneSize { objects: ctx.scene.objects.len(), square_meters: area },
        answer: numeric(area, Unit::SquareMeters),
    }])
}

fn gen_ego_direction(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let pool = labels(Sector::HORIZONTAL.map(|s| s.label()));
    let mut out = Vec::new();
    for f in &ctx.frames {
        let objs = ctx.nameable_in(&f.frame_id);
        for (a, b) in ordered_pairs(&objs) {
            let offset = ego_offset(f, a, b);
            let sector = match classify_sector(offset, params.margin_deg) {
                Ok(Sector::Ambiguous) => {
                    stats.reject("within_margin");
                    continue;
                }
                Ok(s) => s,
                Err(_) => {
                    stats.reject("degenerate_offset");
                    continue;
                }
            };
            let (options, correct) = make_distractors(sector.label(), &pool, 3, DistractorPolicy::Categorical, rng)?;
            out.push(Draft {
                slots: slots(&[
                    ("F", ctx.image_number(&f.frame_id).to_string()),
                    ("A", a.display_name()),
                    ("B", b.display_name()),
                ]),
                object_ids: vec![a.object_id.clone(), b.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::EgoDirection {
                    frame_id: f.frame_id.clone(),
                    a: a.object_id.clone(),
                    b: b.object_id.clone(),
                    offset,
                    sector,
                },
                answer: DraftAnswer::Mcq { options, correct },
            });
        }
    }
    Ok(out)
}

fn gen_vertical(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let objs = ctx.nameable_anywhere();
    let mut out = Vec::new();
    for (x, y) in pairs(&objs) {
        let (a, b) = if rng.gen_bool(0.5) { (x, y) } else { (y, x) };
        let Some((relation, gap_m)) = vertical_relation(a, b, params.vertical_tolerance_m) else {
            stats.reject("vertical_overlap");
            continue;
        };
        let (options, correct) =
            shuffle_options(labels(["above", "below"]), if relation.label() == "above" { 0 } else { 1 }, rng);
        out.push(Draft {
            slots: slots(&[("A", a.display_name()), ("B", b.display_name())]),
            object_ids: vec![a.object_id.clone(), b.object_id.clone()],
            reference: Reference::ByName,
            derivation: Derivation::Vertical { a: a.object_id.clone(), b: b.object_id.clone(), gap_m, relation },
            answer: DraftAnswer::Mcq { options, correct },
        });
    }
    Ok(out)
}

fn two_names(a: &SceneObject, b: &SceneObject, a_correct: bool, rng: &mut ChaCha8Rng) -> DraftAnswer {
    let (options, correct) =
        shuffle_options(vec![a.display_name(), b.display_name()], if a_correct { 0 } else { 1 }, rng);
    DraftAnswer::Mcq { options, correct }
}

fn gen_near_far(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let mut out = Vec::new();
    for f in &ctx.frames {
        let objs = ctx.nameable_in(&f.frame_id);
        for (a, b) in pairs(&objs) {
            let (da, db) = (camera_distance(f, a), camera_distance(f, b));
            if da.max(db) < params.min_ratio_gap * da.min(db) {
                stats.reject("ratio_gap");
                continue;
            }
            let closer = if da < db { a } else { b };
            out.push(Draft {
                slots: slots(&[
                    ("F", ctx.image_number(&f.frame_id).to_string()),
                    ("A", a.display_name()),
                    ("B", b.display_name()),
                ]),
                object_ids: vec![a.object_id.clone(), b.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::NearFar {
                    frame_id: f.frame_id.clone(),
                    a: a.object_id.clone(),
                    b: b.object_id.clone(),
                    dist_a: da,
                    dist_b: db,
                    closer: closer.object_id.clone(),
                },
                answer: two_names(a, b, da < db, rng),
            });
        }
    }
    Ok(out)
}

fn gen_large_small(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let objs = ctx.nameable_anywhere();
    let mut out = Vec::new();
    for (a, b) in pairs(&objs) {
        let (va, vb) = (a.volume(), b.volume());
        if va.max(vb) < params.min_ratio_gap * va.min(vb) {
            stats.reject("ratio_gap");
            continue;
        }
        let larger = if va > vb { a } else { b };
        out.push(Draft {
            slots: slots(&[("A", a.display_name()), ("B", b.display_name())]),
            object_ids: vec![a.object_id.clone(), b.object_id.clone()],
            reference: Reference::ByName,
            derivation: Derivation::LargeSmall {
                a: a.object_id.clone(),
                b: b.object_id.clone(),
                volume_a: va,
                volume_b: vb,
                larger: larger.object_id.clone(),
            },
            answer: two_names(a, b, va > vb, rng),
        });
    }
    Ok(out)
}

fn gen_visible_side(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let pool = labels(ObjectSide::ALL.map(|s| s.label()));
    let mut out = Vec::new();
    for f in &ctx.frames {
        for o in ctx.nameable_in(&f.frame_id) {
            if !o.has_canonical_orientation {
                continue;
            }
            let Some((side, gap)) = visible_side_with_gap(o, f) else {
                stats.reject("camera_inside_object");
                continue;
            };
            if gap < params.side_min_gap {
                stats.reject("near_tie");
                continue;
            }
            let (options, correct) = make_distractors(side.label(), &pool, 3, DistractorPolicy::Categorical, rng)?;
            out.push(Draft {
                slots: slots(&[("F", ctx.image_number(&f.frame_id).to_string()), ("A", o.display_name())]),
                object_ids: vec![o.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::VisibleSide {
                    frame_id: f.frame_id.clone(),
                    object_id: o.object_id.clone(),
                    side,
                    gap,
                },
                answer: DraftAnswer::Mcq { options, correct },
            });
        }
    }
    Ok(out)
}

fn pixel_distance(a: &PixelPoint, b: &PixelPoint) -> f64 {
    (a.u - b.u).hypot(a.v - b.v)
}

/// Picks up to `k` candidates at least `sep` pixels from `anchor` and from
/// each other, visiting candidates in random order.
pub(crate) fn separated_pixels(
    anchor: &PixelPoint,
    candidates: &[(PointId, PixelPoint)],
    sep: f64,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(PointId, PixelPoint)> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(rng);
    let mut chosen: Vec<(PointId, PixelPoint)> = Vec::new();
    for i in order {
        if chosen.len() == k {
            break;
        }
        let c = candidates[i];
        if pixel_distance(&c.1, anchor) >= sep && chosen.iter().all(|x| pixel_distance(&x.1, &c.1) >= sep) {
            chosen.push(c);
        }
    }
    chosen
}

fn gen_point_correspondence(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let Some(points) = ctx.scene.points.as_deref() else {
        return Err(QaError::InsufficientCorrespondence);
    };
    let by_id: BTreeMap<PointId, _> = points.iter().map(|p| (p.point_id, p)).collect();
    let mut out = Vec::new();
    let mut any_shared = false;
    for (fa, fb) in ordered_pairs(&ctx.frames) {
        let (Some(va), Some(vb)) = (ctx.visibility.get(&fa.frame_id), ctx.visibility.get(&fb.frame_id)) else {
            continue;
        };
        let shared: Vec<PointId> = va.visible_points.intersection(&vb.visible_points).copied().collect();
        if shared.is_empty() {
            continue;
        }
        any_shared = true;
        let in_b: Vec<(PointId, PixelPoint)> = vb
            .visible_points
            .iter()
            .filter_map(|id| project_point(&fb.intrinsics, &fb.pose, &by_id[id].position).ok().map(|px| (*id, px)))
            .collect();
        let sep = params.point_min_sep_px * fb.intrinsics.width as f64 / 640.0;
        let &pid = shared.choose(rng).unwrap();
        let (Ok(pa), Ok(pb)) = (
            project_point(&fa.intrinsics, &fa.pose, &by_id[&pid].position),
            project_point(&fb.intrinsics, &fb.pose, &by_id[&pid].position),
        ) else {
            continue;
        };
        let others: Vec<(PointId, PixelPoint)> = in_b.iter().copied().filter(|(id, _)| *id != pid).collect();
        let distractors = separated_pixels(&pb, &others, sep, 3, rng);
        if distractors.len() < 3 {
            stats.reject("insufficient_separated_pixels");
            continue;
        }
        let mut entries = vec![(pid, pb)];
        entries.extend(distractors);
        entries.shuffle(rng);
        let correct = entries.iter().position(|(id, _)| *id == pid).unwrap();
        out.push(Draft {
            slots: slots(&[
                ("F", ctx.image_number(&fa.frame_id).to_string()),
                ("G", ctx.image_number(&fb.frame_id).to_string()),
                ("P", format_pixel(&pa)),
            ]),
            object_ids: by_id[&pid].object_id.iter().cloned().collect(),
            reference: Reference::ByMark,
            derivation: Derivation::PointCorrespondence {
                frame_a: fa.frame_id.clone(),
                frame_b: fb.frame_id.clone(),
                point_id: pid,
                pixel_a: [pa.u, pa.v],
                options: entries.iter().map(|e| e.0).collect(),
            },
            answer: DraftAnswer::Mcq { options: entries.iter().map(|e| format_pixel(&e.1)).collect(), correct },
        });
    }
    if !any_shared {
        return Err(QaError::InsufficientCorrespondence);
    }
    Ok(out)
}

fn gen_object_correspondence(
    ctx: &SetContext,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let mut out = Vec::new();
    let mut any_shared = false;
    for (fa, fb) in ordered_pairs(&ctx.frames) {
        let in_b: Vec<&SceneObject> = ctx.kept_in(&fb.frame_id).collect();
        for x in ctx.kept_in(&fa.frame_id) {
            let matches: Vec<&&SceneObject> = in_b.iter().filter(|o| o.instance_group == x.instance_group).collect();
            let [y] = matches.as_slice() else { continue };
            any_shared = true;
            let (Some(box_a), Some(box_b)) = (
                ctx.record(&fa.frame_id, &x.object_id).and_then(|r| r.visible_bbox),
                ctx.record(&fb.frame_id, &y.object_id).and_then(|r| r.visible_bbox),
            ) else {
                continue;
            };
            let mut same: Vec<&SceneObject> = Vec::new();
            let mut other: Vec<&SceneObject> = Vec::new();
            for o in &in_b {
                if o.instance_group == x.instance_group {
                    continue;
                }
                if o.category.eq_ignore_ascii_case(&x.category) {
                    same.push(o);
                } else {
                    other.push(o);
                }
            }
            same.shuffle(rng);
            other.shuffle(rng);
            let mut entries = vec![(y.object_id.clone(), box_b.render())];
            for o in same.into_iter().chain(other) {
                if entries.len() == 4 {
                    break;
                }
                if let Some(b) = ctx.record(&fb.frame_id, &o.object_id).and_then(|r| r.visible_bbox) {
                    let text = b.render();
                    if !entries.iter().any(|e| e.1 == text) {
                        entries.push((o.object_id.clone(), text));
                    }
                }
            }
            if entries.len() < 2 {
                stats.reject("no_object_distractor");
                continue;
            }
            entries.shuffle(rng);
            let correct = entries.iter().position(|e| e.0 == y.object_id).unwrap();
            out.push(Draft {
                slots: slots(&[
                    ("F", ctx.image_number(&fa.frame_id).to_string()),
                    ("G", ctx.image_number(&fb.frame_id).to_string()),
                    ("BOX", box_a.render()),
                ]),
                object_ids: vec![x.object_id.clone(), y.object_id.clone()],
                reference: Reference::ByMark,
                derivation: Derivation::ObjectCorrespondence {
                    frame_a: fa.frame_id.clone(),
                    frame_b: fb.frame_id.clone(),
                    object_a: x.object_id.clone(),
                    options: entries.iter().map(|e| e.0.clone()).collect(),
                },
                answer: DraftAnswer::Mcq { options: entries.into_iter().map(|e| e.1).collect(), correct },
            });
        }
    }
    if !any_shared {
        return Err(QaError::InsufficientCorrespondence);
    }
    Ok(out)
}

fn gen_camera_motion(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let mut out = Vec::new();
    for (fa, fb) in pairs(&ctx.frames) {
        let motion = CameraMotion::between(&fa.pose, &fb.pose);
        if motion.near_threshold(params.tau_t_m, params.tau_r_deg, params.motion_band) {
            stats.reject("motion_near_threshold");
            continue;
        }
        let labels = motion.labels(params.tau_t_m, params.tau_r_deg);
        let correct_text = describe_motion(&labels, None);
        let mut options = vec![correct_text.clone()];
        for mut tier in corrupted_label_sets(&labels) {
            tier.shuffle(rng);
            for c in tier {
                if options.len() == 4 {
                    break;
                }
                let text = describe_motion(&c, None);
                if !options.contains(&text) {
                    options.push(text);
                }
            }
        }
        let (options, correct) = shuffle_options(options, 0, rng);
        out.push(Draft {
            slots: slots(&[
                ("F", ctx.image_number(&fa.frame_id).to_string()),
                ("G", ctx.image_number(&fb.frame_id).to_string()),
            ]),
            object_ids: Vec::new(),
            reference: Reference::NoObject,
            derivation: Derivation::CameraMotion {
                frame_a: fa.frame_id.clone(),
                frame_b: fb.frame_id.clone(),
                motion,
                labels,
            },
            answer: DraftAnswer::Mcq { options, correct },
        });
    }
    Ok(out)
}

fn gen_allocentric(
    ctx: &SetContext,
    params: &QaParams,
    rng: &mut ChaCha8Rng,
    stats: &mut GenerationStats,
) -> Result<Vec<Draft>, QaError> {
    let objs = ctx.nameable_anywhere();
    let pool = labels(Quadrant::ALL.map(|q| q.label()));
    let mut out = Vec::new();
    for (a, b) in ordered_pairs(&objs) {
        for c in &objs {
            if c.object_id == a.object_id || c.object_id == b.object_id {
                continue;
            }
            let offset = match allocentric_offset(a, b, c, params.min_anchor_m) {
                Ok(o) => o,
                Err(_) => {
                    stats.reject("degenerate_anchor");
                    continue;
                }
            };
            let quadrant = match classify_quadrant(offset, params.margin_deg) {
                Ok(Quadrant::Ambiguous) => {
                    stats.reject("within_margin");
                    continue;
                }
                Ok(q) => q,
                Err(_) => {
                    stats.reject("degenerate_offset");
                    continue;
                }
            };
            let (options, correct) = make_distractors(quadrant.label(), &pool, 3, DistractorPolicy::Categorical, rng)?;
            out.push(Draft {
                slots: slots(&[("A", a.display_name()), ("B", b.display_name()), ("C", c.display_name())]),
                object_ids: vec![a.object_id.clone(), b.object_id.clone(), c.object_id.clone()],
                reference: Reference::ByName,
                derivation: Derivation::Allocentric {
                    a: a.object_id.clone(),
                    b: b.object_id.clone(),
                    c: c.object_id.clone(),
                    offset,
                    quadrant,
                },
                answer: DraftAnswer::Mcq { options, correct },
            });
        }
    }
    Ok(out)
}
