//! C ABI for the decoding engine: opaque model and session handles, status
//! codes, and a generated header (`include/ssbd.h`, via cbindgen at build
//! time). All functions are panic-free; failures return a status code and
//! store a message retrievable with `ssbd_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::sync::Arc;

use ssbd::decoder::{DecodeConfig, MaskMode, PromptTemplate, SessionState};
use ssbd::model::{LanguageModel, ModelFile};
use ssbd::token::TokenSeq;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsbdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range or malformed.
    InvalidArgument = 2,
    /// Model loading or decoding failed; see `ssbd_last_error_message`.
    EngineError = 3,
    /// The output buffer is too small; the required length was written to
    /// the length out-parameter.
    BufferTooSmall = 4,
}

/// Counters for one streaming update.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SsbdUpdateStats {
    /// Draft tokens accepted by verification.
    pub accepted: u64,
    /// Draft length after any trimming.
    pub draft_len: u64,
    /// Model forward calls.
    pub forwards: u64,
    /// Positions computed in multi-position forwards.
    pub prefill_positions: u64,
    /// Single-position decode steps.
    pub decode_steps: u64,
    /// 1 if the output hit the length cap.
    pub truncated: u8,
}

struct ModelInner {
    model: Box<dyn LanguageModel>,
    template: PromptTemplate,
}

/// Opaque model handle.
pub struct SsbdModel {
    inner: Arc<ModelInner>,
}

/// Opaque per-stream session handle. Sessions keep the model alive, so the
/// model handle may be freed first.
pub struct SsbdSession {
    model: Arc<ModelInner>,
    state: SessionState,
    last_output: TokenSeq,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ssbd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Load a JSON model file. On success writes a handle to `out`; free it with
/// `ssbd_model_free`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ssbd_model_load(
    path: *const c_char,
    out: *mut *mut SsbdModel,
) -> SsbdStatus {
    if path.is_null() || out.is_null() {
        return SsbdStatus::NullArgument;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_error("model path is not valid UTF-8");
            return SsbdStatus::InvalidArgument;
        }
    };
    let file = match ModelFile::load(Path::new(path)) {
        Ok(f) => f,
        Err(e) => {
            set_error(e);
            return SsbdStatus::EngineError;
        }
    };
    let template = file.template();
    let handle = SsbdModel {
        inner: Arc::new(ModelInner {
            model: file.into_model(),
            template,
        }),
    };
    *out = Box::into_raw(Box::new(handle));
    SsbdStatus::Ok
}

/// # Safety
/// `model` must come from `ssbd_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ssbd_model_free(model: *mut SsbdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ssbd_model_vocab_size(
    model: *const SsbdModel,
    out: *mut usize,
) -> SsbdStatus {
    if model.is_null() || out.is_null() {
        return SsbdStatus::NullArgument;
    }
    let model = &*model;
    *out = model.inner.model.vocab().size();
    SsbdStatus::Ok
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ssbd_model_eos_id(
    model: *const SsbdModel,
    out: *mut u32,
) -> SsbdStatus {
    if model.is_null() || out.is_null() {
        return SsbdStatus::NullArgument;
    }
    let model = &*model;
    *out = model.inner.model.vocab().eos_id().0;
    SsbdStatus::Ok
}

/// Create a streaming session. `mask_mode`: 0 none, 1 trim-draft, 2
/// display-only. `max_new_tokens` 0 means the default cap.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ssbd_session_new(
    model: *const SsbdModel,
    beta: f64,
    mask_k: usize,
    mask_mode: u32,
    max_new_tokens: usize,
    out: *mut *mut SsbdSession,
) -> SsbdStatus {
    if model.is_null() || out.is_null() {
        return SsbdStatus::NullArgument;
    }
    let mask_mode = match mask_mode {
        0 => MaskMode::None,
        1 => MaskMode::TrimDraft,
        2 => MaskMode::DisplayOnly,
        other => {
            set_error(format!("unknown mask mode {other}"));
            return SsbdStatus::InvalidArgument;
        }
    };
    let config = DecodeConfig {
        beta,
        max_new_tokens: (max_new_tokens > 0).then_some(max_new_tokens),
        mask_k,
        mask_mode,
    };
    let inner = (*model).inner.clone();
    let state = match SessionState::new(inner.template.clone(), config) {
        Ok(s) => s,
        Err(e) => {
            set_error(e);
            return SsbdStatus::InvalidArgument;
        }
    };
    let session = SsbdSession {
        model: inner,
        state,
        last_output: TokenSeq::new(),
    };
    *out = Box::into_raw(Box::new(session));
    SsbdStatus::Ok
}

/// # Safety
/// `session` must come from `ssbd_session_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ssbd_session_free(session: *mut SsbdSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Re-decode for a new revision of the source. `input` is the full source
/// token sequence so far; `is_final` marks the last revision. On success the
/// committed output is readable with `ssbd_session_output`, and `stats`
/// (optional, may be null) receives the step counters.
///
/// # Safety
/// `session` must be valid; `input` must point to `input_len` readable ids.
#[no_mangle]
pub unsafe extern "C" fn ssbd_session_update(
    session: *mut SsbdSession,
    input: *const u32,
    input_len: usize,
    is_final: bool,
    stats: *mut SsbdUpdateStats,
) -> SsbdStatus {
    if session.is_null() || (input.is_null() && input_len > 0) {
        return SsbdStatus::NullArgument;
    }
    let session = &mut *session;
    let ids: Vec<u32> = std::slice::from_raw_parts(input, input_len).to_vec();
    let tokens = TokenSeq::from(ids);
    if let Err(e) = tokens.validate(session.model.model.vocab()) {
        set_error(e);
        return SsbdStatus::InvalidArgument;
    }
    match ssbd::decoder::ssbd_update(
        session.model.model.as_ref(),
        &mut session.state,
        &tokens,
        is_final,
    ) {
        Ok(result) => {
            if !stats.is_null() {
                *stats = SsbdUpdateStats {
                    accepted: result
                        .verification
                        .as_ref()
                        .map(|v| v.accepted as u64)
                        .unwrap_or(0),
                    draft_len: result
                        .verification
                        .as_ref()
                        .map(|v| v.draft_len as u64)
                        .unwrap_or(0),
                    forwards: result.steps.forwards,
                    prefill_positions: result.steps.prefill_positions,
                    decode_steps: result.steps.decode_steps,
                    truncated: result.truncated as u8,
                };
            }
            session.last_output = result.output;
            SsbdStatus::Ok
        }
        Err(e) => {
            set_error(e);
            SsbdStatus::EngineError
        }
    }
}

/// Copy the last committed output into `out`. Writes the token count to
/// `out_len`; if `capacity` is too small, returns `BufferTooSmall` with the
/// required count in `out_len` and leaves `out` untouched.
///
/// # Safety
/// `session` and `out_len` must be valid; `out` must hold `capacity` ids.
#[no_mangle]
pub unsafe extern "C" fn ssbd_session_output(
    session: *const SsbdSession,
    out: *mut u32,
    capacity: usize,
    out_len: *mut usize,
) -> SsbdStatus {
    if session.is_null() || out_len.is_null() {
        return SsbdStatus::NullArgument;
    }
    let output = &(*session).last_output;
    *out_len = output.len();
    if output.len() > capacity {
        return SsbdStatus::BufferTooSmall;
    }
    if out.is_null() && !output.is_empty() {
        return SsbdStatus::NullArgument;
    }
    for (i, token) in output.iter().enumerate() {
        *out.add(i) = token.0;
    }
    SsbdStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssbd::fixtures::random_table_fixture;
    use ssbd::stream::{run_session, Paradigm};

    fn model_handle(seed: u64) -> (*mut SsbdModel, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let fixture = random_table_fixture(seed, "s");
        let path = dir.path().join("model.json");
        ModelFile::Table(fixture.model).save(&path).unwrap();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut model: *mut SsbdModel = std::ptr::null_mut();
        let status = unsafe { ssbd_model_load(c_path.as_ptr(), &mut model) };
        assert_eq!(status, SsbdStatus::Ok);
        (model, dir)
    }

    #[test]
    fn session_updates_match_the_library_trace() {
        let seed = 13;
        let fixture = random_table_fixture(seed, "s");
        let config = DecodeConfig {
            beta: 0.2,
            ..DecodeConfig::default()
        };
        let want = run_session(
            &fixture.model,
            &fixture.updates,
            &fixture.template,
            &config,
            Paradigm::Ssbd,
        )
        .unwrap();

        let (model, _dir) = model_handle(seed);
        let mut session: *mut SsbdSession = std::ptr::null_mut();
        let status = unsafe { ssbd_session_new(model, 0.2, 0, 0, 0, &mut session) };
        assert_eq!(status, SsbdStatus::Ok);

        let vocab = fixture.model.vocab().clone();
        let last = fixture.updates.len() - 1;
        for (i, update) in fixture.updates.iter().enumerate() {
            let input: Vec<u32> =
                vocab.encode(&update.input_text).unwrap().iter().map(|t| t.0).collect();
            let mut stats = SsbdUpdateStats::default();
            let status = unsafe {
                ssbd_session_update(session, input.as_ptr(), input.len(), i == last, &mut stats)
            };
            assert_eq!(status, SsbdStatus::Ok);

            let record = &want.records[i];
            assert_eq!(stats.accepted, record.accepted as u64);
            assert_eq!(stats.forwards, record.forwards);
            assert_eq!(stats.decode_steps, record.decode_steps);

            let mut out = vec![0u32; 256];
            let mut out_len = 0usize;
            let status =
                unsafe { ssbd_session_output(session, out.as_mut_ptr(), out.len(), &mut out_len) };
            assert_eq!(status, SsbdStatus::Ok);
            out.truncate(out_len);
            let got: Vec<u32> = record.output_tokens.iter().map(|t| t.0).collect();
            assert_eq!(out, got, "update {i}");
        }

        unsafe {
            ssbd_session_free(session);
            ssbd_model_free(model);
        }
    }

    #[test]
    fn errors_are_reported_through_status_codes() {
        let missing = CString::new("/nonexistent/model.json").unwrap();
        let mut model: *mut SsbdModel = std::ptr::null_mut();
        let status = unsafe { ssbd_model_load(missing.as_ptr(), &mut model) };
        assert_eq!(status, SsbdStatus::EngineError);
        let message = unsafe { CStr::from_ptr(ssbd_last_error_message()) };
        assert!(!message.to_bytes().is_empty());

        let (model, _dir) = model_handle(2);
        let mut session: *mut SsbdSession = std::ptr::null_mut();
        let status = unsafe { ssbd_session_new(model, 1.5, 0, 0, 0, &mut session) };
        assert_eq!(status, SsbdStatus::InvalidArgument);
        let status = unsafe { ssbd_session_new(model, 0.2, 0, 9, 0, &mut session) };
        assert_eq!(status, SsbdStatus::InvalidArgument);
        assert_eq!(
            unsafe { ssbd_model_vocab_size(model, std::ptr::null_mut()) },
            SsbdStatus::NullArgument
        );

        // Out-of-vocab input id.
        let status = unsafe { ssbd_session_new(model, 0.2, 0, 0, 0, &mut session) };
        assert_eq!(status, SsbdStatus::Ok);
        let bad = [9999u32];
        let status =
            unsafe { ssbd_session_update(session, bad.as_ptr(), 1, false, std::ptr::null_mut()) };
        assert_eq!(status, SsbdStatus::InvalidArgument);

        unsafe {
            ssbd_session_free(session);
            ssbd_model_free(model);
        }
    }

    #[test]
    fn output_buffer_sizing_is_reported() {
        let fixture = random_table_fixture(5, "s");
        let (model, _dir) = model_handle(5);
        let mut session: *mut SsbdSession = std::ptr::null_mut();
        unsafe { ssbd_session_new(model, 0.5, 0, 0, 0, &mut session) };
        let mut vocab_size = 0usize;
        unsafe { ssbd_model_vocab_size(model, &mut vocab_size) };
        assert!(vocab_size > 0);

        let vocab = fixture.model.vocab();
        let input: Vec<u32> = vocab
            .encode(&fixture.updates[0].input_text)
            .unwrap()
            .iter()
            .map(|t| t.0)
            .collect();
        let status = unsafe {
            ssbd_session_update(session, input.as_ptr(), input.len(), false, std::ptr::null_mut())
        };
        assert_eq!(status, SsbdStatus::Ok);

        let mut out_len = 0usize;
        let status =
            unsafe { ssbd_session_output(session, std::ptr::null_mut(), 0, &mut out_len) };
        assert_eq!(status, SsbdStatus::BufferTooSmall);
        assert!(out_len > 0);
        let mut out = vec![0u32; out_len];
        let status =
            unsafe { ssbd_session_output(session, out.as_mut_ptr(), out.len(), &mut out_len) };
        assert_eq!(status, SsbdStatus::Ok);

        unsafe {
            ssbd_session_free(session);
            ssbd_model_free(model);
        }
    }
}
