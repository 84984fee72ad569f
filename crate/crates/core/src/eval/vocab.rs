//! Word lists for the synthetic corpus: printed titles and body vocabulary
//! per document type and language, field labels, names and diagnoses.

pub struct TypeVocab {
    pub doc_type: &'static str,
    pub en_titles: &'static [&'static str],
    pub vi_titles: &'static [&'static str],
    pub en_words: &'static [&'static str],
    pub vi_words: &'static [&'static str],
}

macro_rules! vocab {
    ($($t:literal: [$($et:literal),*] [$($vt:literal),*] [$($ew:literal),*] [$($vw:literal),*];)*) => {
        pub const TYPES: &[TypeVocab] = &[$(TypeVocab {
            doc_type: $t,
            en_titles: &[$($et),*],
            vi_titles: &[$($vt),*],
            en_words: &[$($ew),*],
            vi_words: &[$($vw),*],
        }),*];
    };
}

vocab! {
    "claim_form": ["CLAIM FORM", "HEALTH INSURANCE CLAIM FORM", "CLAIM REQUEST"] ["GIẤY YÊU CẦU BỒI THƯỜNG", "ĐƠN YÊU CẦU BỒI THƯỜNG BẢO HIỂM"]
        ["insured member", "policyholder declaration", "claimant signature", "benefit type", "bank account for payout"]
        ["người được bảo hiểm", "chữ ký người yêu cầu", "cam kết của khách hàng", "quyền lợi bảo hiểm", "tài khoản nhận tiền"];
    "invoice": ["TAX INVOICE", "INVOICE"] ["HÓA ĐƠN GIÁ TRỊ GIA TĂNG", "HÓA ĐƠN BÁN HÀNG"]
        ["subtotal before gst", "unit price", "qty", "amount due", "invoice terms"]
        ["thuế suất gtgt", "đơn giá", "số lượng", "thành tiền", "mã số thuế người bán"];
    "receipt": ["OFFICIAL RECEIPT", "PAYMENT RECEIPT"] ["BIÊN LAI THU TIỀN", "PHIẾU THU"]
        ["received with thanks from", "payment mode cash", "balance outstanding", "cashier"]
        ["đã nhận đủ", "tiền mặt", "người nộp tiền", "lý do nộp", "thủ quỹ"];
    "medical_report": ["MEDICAL REPORT"] ["BÁO CÁO Y TẾ"]
        ["history of presenting illness", "physical examination", "clinical findings", "treatment plan"]
        ["bệnh sử", "khám lâm sàng", "hướng điều trị", "triệu chứng cơ năng"];
    "discharge_summary": ["HOSPITAL DISCHARGE SUMMARY", "DISCHARGE SUMMARY"] ["TÓM TẮT RA VIỆN", "BẢN TÓM TẮT RA VIỆN"]
        ["ward", "length of stay", "discharge medication", "follow up in clinic"]
        ["khoa điều trị", "tình trạng ra viện", "thuốc ra viện", "hẹn tái khám"];
    "final_summary_bill": ["FINAL SUMMARY BILL", "FINAL SUMMARY HOSPITAL BILL"] []
        ["ward charges", "total bill amount", "medisave deduction", "deposit paid", "net payable"] [];
    "itemized_bill": ["ITEMIZED HOSPITAL BILL", "ITEMISED BILL"] ["BẢNG KÊ CHI PHÍ KHÁM CHỮA BỆNH", "BẢNG KÊ CHI PHÍ ĐIỀU TRỊ"]
        ["item code", "line description", "quantity charged", "consumables"]
        ["nội dung chi phí", "số lượng", "bảo hiểm y tế chi trả", "người bệnh tự trả"];
    "medical_certificate": ["MEDICAL CERTIFICATE"] ["GIẤY CHỨNG NHẬN NGHỈ ỐM", "GIẤY CHỨNG NHẬN NGHỈ ỐM HƯỞNG BHXH"]
        ["unfit for duty", "sick leave granted", "number of days"]
        ["nghỉ ốm", "số ngày nghỉ", "từ ngày đến ngày"];
    "referral_letter": ["REFERRAL LETTER", "LETTER OF REFERRAL"] []
        ["dear colleague", "kindly review this patient", "referred for further management"] [];
    "letter_of_guarantee": ["LETTER OF GUARANTEE"] ["GIẤY BẢO LÃNH VIỆN PHÍ"]
        ["guarantee amount", "coverage limit", "we undertake to pay"]
        ["số tiền bảo lãnh", "phạm vi bảo lãnh", "cam kết thanh toán"];
    "xray_report": ["X-RAY REPORT", "CHEST X-RAY REPORT"] ["KẾT QUẢ CHỤP X QUANG"]
        ["radiograph", "chest pa view", "impression", "no opacity seen"]
        ["phim chụp", "lồng ngực thẳng", "kết luận phim", "bóng tim"];
    "diagnostic_test_report": ["DIAGNOSTIC TEST REPORT", "DIAGNOSTIC IMAGING REPORT"] ["PHIẾU CHẨN ĐOÁN HÌNH ẢNH"]
        ["ultrasound", "ct scan", "mri sequence", "technician"]
        ["siêu âm", "cắt lớp vi tính", "cộng hưởng từ", "kỹ thuật viên hình ảnh"];
    "lab_report": ["LABORATORY REPORT", "LAB REPORT"] ["KẾT QUẢ XÉT NGHIỆM"]
        ["specimen", "reference range", "haemoglobin", "fasting glucose"]
        ["mẫu bệnh phẩm", "chỉ số bình thường", "đường huyết", "huyết học"];
    "prescription": ["PRESCRIPTION"] ["ĐƠN THUỐC"]
        ["tablets", "dosage", "twice daily after meals", "refill"]
        ["viên nén", "liều dùng", "ngày uống hai lần", "sáng chiều"];
    "histology_report": ["HISTOLOGY REPORT"] ["KẾT QUẢ GIẢI PHẪU BỆNH"]
        ["biopsy", "microscopic description", "tissue block", "no malignancy"]
        ["sinh thiết", "mô tả vi thể", "mô bệnh học", "không thấy ác tính"];
    "cpf_statement": ["CPF MEDISAVE STATEMENT", "CPF STATEMENT"] []
        ["medisave account", "withdrawal", "contribution", "account holder"] [];
    "claim_settlement": ["CLAIM SETTLEMENT NOTICE", "CLAIM SETTLEMENT ADVICE"] ["THÔNG BÁO GIẢI QUYẾT BỒI THƯỜNG"]
        ["approved amount", "payee", "settled on", "deductible applied"]
        ["số tiền chi trả", "người thụ hưởng", "khấu trừ", "đã phê duyệt"];
    "gl_request_form": ["GUARANTEE LETTER REQUEST FORM", "GL REQUEST FORM"] ["GIẤY YÊU CẦU BẢO LÃNH"]
        ["estimated cost", "attending physician", "pre-authorisation", "planned procedure"]
        ["dự kiến chi phí", "bác sĩ điều trị", "ngày nhập viện dự kiến", "thủ thuật dự kiến"];
    "test_order_form": ["TEST ORDER FORM"] ["PHIẾU CHỈ ĐỊNH XÉT NGHIỆM"]
        ["tests ordered", "fasting required", "urgent", "specimen collection"]
        ["nội dung chỉ định", "nhịn ăn", "cấp cứu", "lấy mẫu"];
    "pre_admission_form": ["HOSPITAL PRE-ADMISSION FORM", "PRE-ADMISSION FORM"] ["PHIẾU NHẬP VIỆN"]
        ["ward class", "expected stay", "next of kin", "admitting doctor"]
        ["loại phòng", "người thân liên hệ", "dự kiến nằm viện", "bác sĩ nhận bệnh"];
    "initial_guarantee_letter": ["INITIAL GUARANTEE LETTER"] ["THƯ BẢO LÃNH BAN ĐẦU"]
        ["provisional approval", "initial deposit waived", "subject to final bill"]
        ["duyệt tạm thời", "miễn tạm ứng", "theo hóa đơn cuối"];
    "final_guarantee_letter": ["FINAL GUARANTEE LETTER"] ["THƯ BẢO LÃNH CUỐI CÙNG"]
        ["final approval", "total approved", "member excess"]
        ["duyệt cuối cùng", "tổng chi phí được duyệt", "phần khách hàng trả"];
    "discharge_certificate": [] ["GIẤY RA VIỆN"]
        [] ["ngày vào viện", "ngày ra viện", "phương pháp điều trị", "lời dặn của thầy thuốc"];
    "surgery_certificate": [] ["GIẤY CHỨNG NHẬN PHẪU THUẬT"]
        [] ["phương pháp phẫu thuật", "phẫu thuật viên", "phương pháp vô cảm"];
    "birth_certificate": [] ["GIẤY KHAI SINH"]
        [] ["họ và tên cha", "họ và tên mẹ", "nơi sinh", "quốc tịch"];
    "physiotherapy_record": [] ["PHIẾU VẬT LÝ TRỊ LIỆU"]
        [] ["buổi tập", "phục hồi chức năng", "kỹ thuật điều trị"];
    "accident_report": [] ["BIÊN BẢN TAI NẠN"]
        [] ["hiện trường", "nhân chứng", "thời điểm xảy ra", "mô tả sự việc"];
    "vehicle_registration": [] ["GIẤY ĐĂNG KÝ XE"]
        [] ["biển số", "số khung", "số máy", "tên chủ xe"];
    "driver_license": [] ["GIẤY PHÉP LÁI XE"]
        [] ["hạng bằng", "có giá trị đến", "nơi cấp"];
    "national_id": [] ["CĂN CƯỚC CÔNG DÂN"]
        [] ["quê quán", "nơi thường trú", "đặc điểm nhận dạng"];
    "dental_treatment_form": [] ["PHIẾU ĐIỀU TRỊ NHA KHOA"]
        [] ["răng hàm", "trám răng", "nhổ răng", "cạo vôi"];
}

/// Titles no rule maps; pages carrying them must go to the text model.
pub const UNMAPPABLE_EN: &[&str] = &["PATIENT COPY", "PAGE 1 OF 2", "CONFIDENTIAL", "ORIGINAL"];
pub const UNMAPPABLE_VI: &[&str] = &["BẢN SAO", "TRANG 1/2", "LƯU HÀNH NỘI BỘ", "LIÊN 2"];

pub const COMMON_EN: &[&str] = &["patient", "address", "telephone", "page", "printed on", "ref"];
pub const COMMON_VI: &[&str] = &["người bệnh", "địa chỉ", "điện thoại", "trang", "ngày in", "mã"];

pub fn label(field: &str, vi: bool) -> Option<&'static str> {
    let (en, v) = match field {
        "claim_id" => ("Claim No:", "Số hồ sơ:"),
        "patient_name" => ("Patient Name:", "Họ tên người bệnh:"),
        "policy_number" => ("Policy No:", "Số hợp đồng:"),
        "claim_amount" => ("Amount Claimed:", "Số tiền yêu cầu:"),
        "provider" => ("Hospital:", "Cơ sở khám chữa bệnh:"),
        "visit_date" => ("Visit Date:", "Ngày khám:"),
        "total_amount" => ("Total:", "Tổng cộng:"),
        "receipt_number" => ("Receipt No:", "Số biên lai:"),
        "paid_amount" => ("Amount Paid:", "Số tiền đã thu:"),
        "payment_date" => ("Payment Date:", "Ngày thu:"),
        "diagnosis" => ("Diagnosis:", "Chẩn đoán:"),
        "doctor_name" => ("Doctor:", "Bác sĩ:"),
        "admission_date" => ("Admission Date:", "Ngày vào viện:"),
        _ => return None,
    };
    Some(if vi { v } else { en })
}

pub const NAMES_VI: &[&str] = &[
    "Nguyễn Văn An", "Trần Thị Bích", "Lê Minh Châu", "Phạm Quốc Dũng", "Hoàng Thu Hà", "Vũ Đức Hải",
    "Đặng Thị Lan", "Bùi Thanh Long", "Đỗ Mỹ Linh", "Ngô Gia Huy", "Dương Khánh Vy", "Lý Hoàng Nam",
];
pub const NAMES_EN: &[&str] = &[
    "Tan Wei Ming", "Lim Hui Min", "Ong Jia Hao", "Goh Siew Ling", "Rajesh Kumar", "Siti Nurhaliza",
    "Chen Mei Ling", "Daniel Koh", "Priya Nair", "Lee Kah Wai", "Muhammad Faizal", "Wong Shu Qi",
];
pub const DOCTORS_VI: &[&str] = &["BS. Trần Minh Đức", "BS. Lê Thị Hồng", "BS. Phạm Văn Tùng", "BS. Nguyễn Thị Mai"];
pub const DOCTORS_EN: &[&str] = &["Dr. Tan Boon Huat", "Dr. Sarah Lim", "Dr. Ahmad Rahman", "Dr. Grace Teo"];
pub const DIAGNOSES_VI: &[&str] = &[
    "Viêm phế quản cấp", "Sốt xuất huyết Dengue", "Viêm dạ dày", "Tăng huyết áp", "Viêm họng cấp", "Gãy xương cẳng tay",
];
pub const DIAGNOSES_EN: &[&str] = &[
    "Acute bronchitis", "Dengue fever", "Gastritis", "Essential hypertension", "Acute pharyngitis", "Fracture of forearm",
];
